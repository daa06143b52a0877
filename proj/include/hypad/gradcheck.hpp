// Finite-difference check of the analytic loss gradient.

#pragma once

#include <cstdint>
#include <string>

namespace hypad {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t d_in = 4;
  std::size_t d_out = 3;
  std::size_t levels = 2;
  std::size_t batch = 8;
  double step = 1e-5;
  double tolerance = 1e-4;  // relative, with a 1e-7 floor on the denominator
};

struct GradcheckResult {
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  std::string worst;  // parameter name and index of the largest error
  bool passed = false;
};

/// Compares the tape gradient of the training loss on a random model and
/// batch against central differences of the tape-free forward pass.
GradcheckResult run_gradcheck(const GradcheckOptions& options = {});

}  // namespace hypad
