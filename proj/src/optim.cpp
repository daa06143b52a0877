#include "hypad/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hypad {

void adam_step(std::span<Vector* const> params, std::span<const Vector> grads, OptimState& state, double lr) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: one gradient per parameter required");
  if (state.first_moment.empty()) {
    for (const Vector* p : params) {
      state.first_moment.emplace_back(p->size(), 0.0);
      state.second_moment.emplace_back(p->size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw DimensionError("adam_step: optimizer state mismatch");

  const AdamConfig& cfg = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Vector& p = *params[i];
    const Vector& g = grads[i];
    Vector& m = state.first_moment[i];
    Vector& v = state.second_moment[i];
    if (g.size() != p.size() || m.size() != p.size()) throw DimensionError("adam_step: shape mismatch");
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace hypad
