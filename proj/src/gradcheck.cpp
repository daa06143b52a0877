#include "hypad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "hypad/model.hpp"
#include "hypad/random.hpp"

namespace hypad {

GradcheckResult run_gradcheck(const GradcheckOptions& o) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < o.levels; ++l) names.push_back("level_" + std::to_string(l));
  ModelState state = init_model(names, std::vector<std::size_t>(o.levels, o.d_in), o.d_out, o.seed, 1.0, true);
  std::mt19937_64 rng(derive_seed(o.seed, "gradcheck"));
  std::normal_distribution<double> normal;
  state.log_c = 0.3 * normal(rng);
  state.hyperplane[0] = 0.3 * normal(rng);

  std::vector<Vector> storage(o.batch * o.levels, Vector(o.d_in));
  for (auto& f : storage) {
    for (double& v : f) v = normal(rng);
  }
  PixelBatch batch;
  batch.num_levels = o.levels;
  for (const auto& f : storage) batch.features.emplace_back(f);
  for (std::size_t b = 0; b < o.batch; ++b) batch.labels.push_back(static_cast<int>(b % 3 == 0));

  const LossAndGradient analytic = loss_and_gradient(batch, state);
  const auto loss = [&](const ModelState& s) { return bce_loss_from_logits(forward_logits(batch, s), batch.labels); };

  GradcheckResult result;
  const auto check = [&](const std::string& name, std::size_t index, double& param, double grad) {
    const double saved = param;
    param = saved + o.step;
    const double up = loss(state);
    param = saved - o.step;
    const double down = loss(state);
    param = saved;
    const double numeric = (up - down) / (2.0 * o.step);
    const double err = std::abs(numeric - grad) / std::max({std::abs(numeric), std::abs(grad), 1e-7});
    ++result.checked;
    if (result.worst.empty() || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst = name + "[" + std::to_string(index) + "]";
    }
  };
  for (std::size_t l = 0; l < o.levels; ++l) {
    for (std::size_t k = 0; k < state.projections[l].size(); ++k) {
      check("W_" + std::to_string(l), k, state.projections[l][k], analytic.projection_grads[l][k]);
    }
  }
  for (std::size_t k = 0; k < state.hyperplane.size(); ++k) {
    check("w", k, state.hyperplane[k], analytic.hyperplane_grad[k]);
  }
  check("log_c", 0, state.log_c, analytic.log_c_grad);
  result.passed = std::isfinite(result.max_relative_error) && result.max_relative_error <= o.tolerance;
  return result;
}

}  // namespace hypad
