// Synthetic two-level feature datasets with planted anomalies, used for smoke
// runs and end-to-end checks without a feature extractor.

#pragma once

#include <cstdint>

#include "hypad/manifest.hpp"

namespace hypad {

struct ToyConfig {
  std::size_t height = 10;  // finest level; the second level is half size
  std::size_t width = 10;
  std::size_t channels = 4;
  double sigma = 0.5;   // std of normal features
  double offset = 3.0;  // anomaly shift along a fixed unit direction, in units of sigma
  std::size_t train_sources = 10;
  std::size_t test_normal = 10;
  std::size_t test_anomalous = 10;
};

struct ToyData {
  Dataset train;
  Dataset test;
};

/// Training images are anomalies synthesized on distinct normal sources, each
/// with exactly half of its pixels anomalous. Test normals carry all-zero
/// masks; test anomalies carry one random rectangle.
ToyData make_toy(const ToyConfig& config, std::uint64_t seed);

}  // namespace hypad
