#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hypad/geometry.hpp"

namespace hypad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimState {
  AdamConfig config;
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update applied in place. Moments are created on the
/// first call and must keep the parameters' shapes afterwards.
void adam_step(std::span<Vector* const> params, std::span<const Vector> grads, OptimState& state, double lr);

}  // namespace hypad
