// Multi-level feature ingestion: neighbourhood pooling, upsampling to a shared
// resolution, and alignment of pixel masks to that resolution.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hypad/tensor.hpp"

namespace hypad {

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Feature maps of one image, shallow to deep. Each level is [H_l][W_l][C_l].
struct FeatureStack {
  std::vector<Tensor> levels;
  std::vector<std::string> level_names;
  std::string source_id;
};

/// Levels resampled onto the finest grid (H*, W*).
struct AlignedFeatures {
  std::vector<Tensor> levels;
  std::size_t height = 0;
  std::size_t width = 0;
  std::optional<Tensor> labels;  // [H*][W*] in {0,1}
};

/// Mean over the p x p neighbourhood of every position (stride 1, replicated
/// borders). The window spans offsets [-(p-1)/2, p/2] along each axis.
Tensor patchify(const Tensor& level, std::size_t patch);

/// Bilinear resize with align_corners = false. Downscaling is rejected.
Tensor upsample_bilinear(const Tensor& level, std::size_t target_h, std::size_t target_w);

/// Majority-rule downsampling of a binary [H0][W0] mask: a target cell is 1
/// when at least half of its source footprint (by area) is anomalous.
Tensor align_mask(const Tensor& mask, std::size_t target_h, std::size_t target_w);

/// patchify + upsample every level; align the mask when one is given.
AlignedFeatures align_features(const FeatureStack& stack, std::size_t patch,
                               const std::optional<Tensor>& mask = std::nullopt);

}  // namespace hypad
