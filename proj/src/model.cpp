#include "hypad/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"

#include "hypad/optim.hpp"
#include "hypad/random.hpp"
#include "hypad/tensor.hpp"

namespace hypad {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

bool all_finite(const Vector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector random_unit(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& x : v) x = normal(rng);
    norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  }
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

void ModelState::validate() const {
  if (levels.empty() || levels.size() != d_in.size() || projections.size() != levels.size()) {
    throw DimensionError("model: levels, d_in and projections disagree");
  }
  if (d_out < 1) throw DimensionError("model: d_out must be >= 1");
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (projections[l].size() != d_out * d_in[l]) throw DimensionError("model: projection " + levels[l] + " has wrong size");
    if (!all_finite(projections[l])) throw std::domain_error("model: projection " + levels[l] + " is not finite");
  }
  if (hyperplane.size() != d_out + 1) throw DimensionError("model: hyperplane has wrong size");
  if (!all_finite(hyperplane) || !std::isfinite(log_c)) throw std::domain_error("model: non-finite parameters");
}

ModelState init_model(std::vector<std::string> levels, std::vector<std::size_t> d_in, std::size_t d_out,
                      std::uint64_t seed, double initial_c, bool learn_curvature) {
  ModelState s;
  s.levels = std::move(levels);
  s.d_in = std::move(d_in);
  s.d_out = d_out;
  s.log_c = Curvature::from_value(initial_c).log_value();
  s.learn_curvature = learn_curvature;
  if (s.levels.size() != s.d_in.size()) throw DimensionError("init_model: one d_in per level required");

  std::mt19937_64 rng(derive_seed(seed, "model-init"));
  for (std::size_t n : s.d_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(n));
    std::uniform_real_distribution<double> u(-bound, bound);
    Vector w(d_out * n);
    for (double& x : w) x = u(rng);
    s.projections.push_back(std::move(w));
  }
  s.hyperplane.assign(d_out + 1, 0.0);
  const Vector space = random_unit(rng, d_out);
  std::copy(space.begin(), space.end(), s.hyperplane.begin() + 1);
  s.validate();
  return s;
}

bool revalidate_hyperplane(Vector& w, std::uint64_t seed, double threshold) {
  if (lorentz_inner(w, w) > threshold) return false;
  std::mt19937_64 rng(derive_seed(seed, "hyperplane-reset"));
  const Vector space = random_unit(rng, w.size() - 1);
  w[0] = 0.0;
  std::copy(space.begin(), space.end(), w.begin() + 1);
  return true;
}

LorentzPoint lift(std::span<const double> feature, Curvature c) { return expmap_origin(feature, c); }

LorentzPoint hyperbolic_linear(const LorentzPoint& z, std::span<const double> matrix, std::size_t rows,
                               std::size_t cols) {
  if (z.dim() != cols || matrix.size() != rows * cols) throw DimensionError("hyperbolic_linear: shape mismatch");
  const auto space = z.space();
  Vector y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < cols; ++k) s += matrix[r * cols + k] * space[k];
    y[r] = s;
  }
  return reproject(y, z.curvature);
}

Vector confidence_weights(std::span<const LorentzPoint> points) {
  Vector w;
  w.reserve(points.size());
  for (const auto& p : points) {
    const Vector ball = lorentz_to_poincare(p);
    w.push_back(std::sqrt(std::inner_product(ball.begin(), ball.end(), ball.begin(), 0.0)));
  }
  return w;
}

LorentzPoint fuse(std::span<const LorentzPoint> points, std::span<const double> weights) {
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
    const Vector uniform(points.size(), 1.0);
    return lorentzian_centroid(points, uniform);
  }
  return lorentzian_centroid(points, weights);
}

LorentzPoint embed(std::span<const std::span<const double>> levels, const ModelState& state) {
  if (levels.size() != state.levels.size()) throw DimensionError("embed: wrong number of levels");
  const Curvature c = state.curvature();
  std::vector<LorentzPoint> projected;
  projected.reserve(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (levels[l].size() != state.d_in[l]) {
      throw DimensionError("embed: level " + state.levels[l] + " has " + std::to_string(levels[l].size()) +
                           " channels, model expects " + std::to_string(state.d_in[l]));
    }
    projected.push_back(hyperbolic_linear(lift(levels[l], c), state.projections[l], state.d_out, state.d_in[l]));
  }
  return fuse(projected, confidence_weights(projected));
}

double pixel_logit(std::span<const std::span<const double>> levels, const ModelState& state) {
  return hyperplane_logit(embed(levels, state), Hyperplane{state.hyperplane, state.curvature()});
}

std::vector<double> forward_logits(const PixelBatch& batch, const ModelState& state) {
  std::vector<double> out(batch.size());
  for (std::size_t b = 0; b < out.size(); ++b) out[b] = pixel_logit(batch.pixel(b), state);
  return out;
}

std::vector<double> forward(const PixelBatch& batch, const ModelState& state) {
  std::vector<double> p = forward_logits(batch, state);
  for (double& v : p) v = anomaly_probability(v);
  return p;
}

double bce_loss(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size()) throw DimensionError("bce_loss: one label per probability required");
  double anomalous = 0.0, normal = 0.0;
  std::size_t n_anomalous = 0, n_normal = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      anomalous -= std::log(probabilities[i]);
      ++n_anomalous;
    } else {
      normal -= std::log1p(-probabilities[i]);
      ++n_normal;
    }
  }
  return (n_anomalous ? anomalous / static_cast<double>(n_anomalous) : 0.0) +
         (n_normal ? normal / static_cast<double>(n_normal) : 0.0);
}

double bce_loss_from_logits(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) throw DimensionError("bce_loss: one label per logit required");
  double anomalous = 0.0, normal = 0.0;
  std::size_t n_anomalous = 0, n_normal = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    // -log p = softplus(l), -log(1 - p) = softplus(-l) for p = 1 / (1 + e^l)
    if (labels[i] == 1) {
      anomalous += softplus(logits[i]);
      ++n_anomalous;
    } else {
      normal += softplus(-logits[i]);
      ++n_normal;
    }
  }
  return (n_anomalous ? anomalous / static_cast<double>(n_anomalous) : 0.0) +
         (n_normal ? normal / static_cast<double>(n_normal) : 0.0);
}

double image_score(std::span<const double> pixel_probabilities) {
  if (pixel_probabilities.empty()) throw std::invalid_argument("image_score: empty probability map");
  return *std::max_element(pixel_probabilities.begin(), pixel_probabilities.end());
}

ParameterVars register_parameters(ad::Tape& tape, const ModelState& state) {
  ParameterVars p;
  for (const auto& w : state.projections) p.projections.push_back(tape.parameter(w));
  p.hyperplane = tape.parameter(state.hyperplane);
  p.log_c = state.learn_curvature ? tape.parameter({state.log_c}) : tape.constant(state.log_c);
  return p;
}

ad::Var pixel_logit(ad::Tape& tape, const ParameterVars& params, const ModelState& state,
                    std::span<const std::span<const double>> levels) {
  if (levels.size() != state.levels.size()) throw DimensionError("pixel_logit: wrong number of levels");
  const ad::Var sqrt_c = ad::sqrt_curvature(params.log_c);
  const ad::Var inv_c = ad::exp(ad::neg(params.log_c));

  std::vector<ad::Var> points, weights;
  bool all_zero = true;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto f = levels[l];
    if (f.size() != state.d_in[l]) throw DimensionError("pixel_logit: channel mismatch on " + state.levels[l]);
    // exp_O(f) has space part sinhc(sqrt(c)|f|) f. The linear layer only sees
    // the space part, so W (s f) = s (W f) keeps the feature off the tape.
    const double norm = std::sqrt(std::inner_product(f.begin(), f.end(), f.begin(), 0.0) + ad::kNormEpsilon);
    const ad::Var s = ad::sinhc(ad::mul(sqrt_c, tape.constant(norm)));
    const ad::Var space = ad::mul(s, ad::matvec(params.projections[l], state.d_out, state.d_in[l], f));
    const ad::Var time = ad::sqrt(ad::add(ad::squared_norm(space), inv_c));
    const ad::Var point = ad::concat(time, space);
    const ad::Var weight = ad::poincare_radius(point, params.log_c);
    all_zero = all_zero && weight.scalar() == 0.0;
    points.push_back(point);
    weights.push_back(weight);
  }
  if (all_zero) {
    for (auto& w : weights) w = tape.constant(1.0);
  }
  const ad::Var fused = ad::lorentzian_centroid(points, weights, params.log_c);
  return ad::hyperplane_logit(fused, params.hyperplane, params.log_c);
}

LossAndGradient loss_and_gradient(const PixelBatch& batch, const ModelState& state, std::size_t chunk) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("loss_and_gradient: empty batch");
  if (batch.labels.size() != n) throw DimensionError("loss_and_gradient: one label per pixel required");
  const auto n_anomalous = static_cast<std::size_t>(std::count(batch.labels.begin(), batch.labels.end(), 1));
  const std::size_t n_normal = n - n_anomalous;
  const double w_anomalous = n_anomalous ? 1.0 / static_cast<double>(n_anomalous) : 0.0;
  const double w_normal = n_normal ? 1.0 / static_cast<double>(n_normal) : 0.0;

  LossAndGradient out;
  out.projection_grads.reserve(state.projections.size());
  for (const auto& w : state.projections) out.projection_grads.emplace_back(w.size(), 0.0);
  out.hyperplane_grad.assign(state.hyperplane.size(), 0.0);

  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    ad::Tape tape;
    const ParameterVars params = register_parameters(tape, state);
    ad::Var anomalous_sum = tape.constant(0.0), normal_sum = tape.constant(0.0);
    for (std::size_t b = begin; b < end; ++b) {
      const ad::Var logit = pixel_logit(tape, params, state, batch.pixel(b));
      if (batch.labels[b] == 1) {
        anomalous_sum = ad::add(anomalous_sum, ad::softplus(logit));
      } else {
        normal_sum = ad::add(normal_sum, ad::softplus(ad::neg(logit)));
      }
    }
    const ad::Var loss = ad::add(ad::scale(anomalous_sum, w_anomalous), ad::scale(normal_sum, w_normal));
    tape.backward(loss);
    out.loss += loss.scalar();
    for (std::size_t l = 0; l < params.projections.size(); ++l) {
      const Vector g = tape.gradient(params.projections[l]);
      for (std::size_t k = 0; k < g.size(); ++k) out.projection_grads[l][k] += g[k];
    }
    const Vector gw = tape.gradient(params.hyperplane);
    for (std::size_t k = 0; k < gw.size(); ++k) out.hyperplane_grad[k] += gw[k];
    if (state.learn_curvature) out.log_c_grad += tape.gradient(params.log_c)[0];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_checkpoint(const std::filesystem::path& dir, const ModelState& state, const OptimState* optim) {
  state.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json h;
  h["format-version"] = 1;
  h["levels"] = state.levels;
  h["d_in"] = state.d_in;
  h["d_out"] = state.d_out;
  h["log_c"] = state.log_c;
  h["learn_curvature"] = state.learn_curvature;
  h["patch"] = state.patch;
  for (std::size_t l = 0; l < state.levels.size(); ++l) {
    write_tensor(Tensor({state.d_out, state.d_in[l]}, state.projections[l], DType::F64),
                 dir / ("projection_" + std::to_string(l) + ".ftns"));
  }
  write_tensor(Tensor({state.hyperplane.size()}, state.hyperplane, DType::F64), dir / "hyperplane.ftns");
  if (optim) {
    h["adam"] = {{"beta1", optim->config.beta1},
                 {"beta2", optim->config.beta2},
                 {"epsilon", optim->config.epsilon},
                 {"step", optim->step},
                 {"slots", optim->first_moment.size()}};
    for (std::size_t i = 0; i < optim->first_moment.size(); ++i) {
      const auto& m = optim->first_moment[i];
      const auto& v = optim->second_moment[i];
      write_tensor(Tensor({m.size()}, m, DType::F64), dir / ("adam_m_" + std::to_string(i) + ".ftns"));
      write_tensor(Tensor({v.size()}, v, DType::F64), dir / ("adam_v_" + std::to_string(i) + ".ftns"));
    }
  }
  write_text_atomic(dir / "header.json", h.dump(2) + "\n");
}

ModelState read_checkpoint(const std::filesystem::path& dir, OptimState* optim) {
  std::ifstream in(dir / "header.json");
  if (!in) throw FormatError("checkpoint header not found in " + dir.string());
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir.string() + "/header.json: " + e.what());
  }
  if (h.value("format-version", 0) != 1) throw FormatError("unsupported checkpoint version");
  ModelState s;
  s.levels = h.at("levels").get<std::vector<std::string>>();
  s.d_in = h.at("d_in").get<std::vector<std::size_t>>();
  s.d_out = h.at("d_out").get<std::size_t>();
  s.log_c = h.at("log_c").get<double>();
  s.learn_curvature = h.value("learn_curvature", true);
  s.patch = h.value("patch", std::size_t{3});
  for (std::size_t l = 0; l < s.levels.size(); ++l) {
    s.projections.push_back(read_tensor(dir / ("projection_" + std::to_string(l) + ".ftns")).values());
  }
  s.hyperplane = read_tensor(dir / "hyperplane.ftns").values();
  s.validate();
  if (optim) {
    *optim = OptimState{};
    if (h.contains("adam")) {
      const auto& a = h["adam"];
      optim->config = {a.at("beta1").get<double>(), a.at("beta2").get<double>(), a.at("epsilon").get<double>()};
      optim->step = a.at("step").get<std::uint64_t>();
      const auto slots = a.at("slots").get<std::size_t>();
      for (std::size_t i = 0; i < slots; ++i) {
        optim->first_moment.push_back(read_tensor(dir / ("adam_m_" + std::to_string(i) + ".ftns")).values());
        optim->second_moment.push_back(read_tensor(dir / ("adam_v_" + std::to_string(i) + ".ftns")).values());
      }
    }
  }
  return s;
}

}  // namespace hypad
