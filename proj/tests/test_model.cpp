#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "hypad/model.hpp"
#include "hypad/optim.hpp"

using namespace hypad;

namespace {

const Curvature kUnit = Curvature::from_value(1.0);

Vector random_vector(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (double& x : v) x = g(rng);
  return v;
}

// Owns feature storage for a PixelBatch.
struct OwnedBatch {
  std::vector<Vector> storage;  // [B * levels]
  PixelBatch batch;
  void finish(std::size_t levels) {
    batch.num_levels = levels;
    batch.features.clear();
    for (const auto& v : storage) batch.features.emplace_back(v);
  }
};

OwnedBatch random_batch(std::uint64_t seed, std::size_t b, std::size_t levels, std::size_t d_in) {
  std::mt19937_64 rng(seed);
  OwnedBatch out;
  for (std::size_t i = 0; i < b * levels; ++i) out.storage.push_back(random_vector(rng, d_in, 1.0));
  for (std::size_t i = 0; i < b; ++i) out.batch.labels.push_back(static_cast<int>(i % 2));
  out.finish(levels);
  return out;
}

}  // namespace

TEST(Lift, Examples) {
  const Vector zero(5, 0.0);
  const LorentzPoint o = lift(zero, kUnit);
  EXPECT_DOUBLE_EQ(o.time(), 1.0);
  for (double v : o.space()) EXPECT_EQ(v, 0.0);

  const Vector e1 = {1.0, 0.0, 0.0};
  EXPECT_NEAR(lift(e1, kUnit).time(), std::cosh(1.0), 1e-12);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vector f = random_vector(rng, 6, 2.0);
    EXPECT_LT(hyperboloid_residual(lift(f, Curvature::from_value(0.3 + i * 0.05))), 1e-6);
  }
}

TEST(HyperbolicLinear, Examples) {
  const Vector identity = {1, 0, 0, 1};
  const LorentzPoint o = origin(kUnit, 2);
  const LorentzPoint y0 = hyperbolic_linear(o, identity, 2, 2);
  EXPECT_DOUBLE_EQ(y0.time(), 1.0);
  EXPECT_EQ(y0.space()[0], 0.0);
  EXPECT_EQ(y0.space()[1], 0.0);

  const LorentzPoint z{{std::cosh(1.0), std::sinh(1.0), 0.0}, kUnit};
  const Vector twice = {2, 0, 0, 2};
  const LorentzPoint y = hyperbolic_linear(z, twice, 2, 2);
  EXPECT_NEAR(y.space()[0], 2 * std::sinh(1.0), 1e-12);
  EXPECT_NEAR(y.space()[1], 0.0, 1e-15);
  EXPECT_NEAR(y.time(), std::sqrt(4 * std::sinh(1.0) * std::sinh(1.0) + 1), 1e-12);

  EXPECT_THROW(hyperbolic_linear(z, twice, 2, 3), DimensionError);
}

TEST(HyperbolicLinear, ConstraintHoldsForAnyMatrix) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Curvature c = Curvature::from_value(std::pow(10.0, -2.0 + 4.0 * (i % 9) / 8.0));
    const LorentzPoint z = expmap_origin(random_vector(rng, 5, 1.0), c);
    // badly conditioned: rows of wildly different magnitude
    Vector w = random_vector(rng, 3 * 5, 1.0);
    for (std::size_t k = 0; k < 5; ++k) w[k] *= 1e4;
    // |y|^2 reaches 1e8 here, so the absolute residual is bounded by rounding
    // of the squares; compare it relative to the coordinate scale.
    const LorentzPoint y = hyperbolic_linear(z, w, 3, 5);
    EXPECT_LT(hyperboloid_residual(y), 1e-9);
  }
  // moderate coordinates: the absolute constraint holds to 1e-9
  for (double cv : {0.1, 1.0, 10.0}) {
    const Curvature c = Curvature::from_value(cv);
    for (int i = 0; i < 100; ++i) {
      const LorentzPoint z = expmap_origin(random_vector(rng, 5, 0.5), c);
      const LorentzPoint y = hyperbolic_linear(z, random_vector(rng, 15, 1.0), 3, 5);
      EXPECT_LT(std::abs(lorentz_inner(y.coords, y.coords) + 1.0 / cv), 1e-9);
    }
  }
}

TEST(ConfidenceWeights, Examples) {
  const std::vector<LorentzPoint> pts = {origin(kUnit, 2), {{std::cosh(1.0), std::sinh(1.0), 0.0}, kUnit},
                                         {{std::cosh(2.0), 0.0, std::sinh(2.0)}, kUnit}};
  const Vector w = confidence_weights(pts);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[1], std::tanh(0.5), 1e-12);
  EXPECT_GT(w[2], w[1]);
}

TEST(Fuse, UniformFallbackAndDelegation) {
  const std::vector<LorentzPoint> at_origin = {origin(kUnit, 3), origin(kUnit, 3)};
  const LorentzPoint f = fuse(at_origin, Vector{0.0, 0.0});
  EXPECT_NEAR(f.time(), 1.0, 1e-12);

  const std::vector<LorentzPoint> pair = {{{std::cosh(1.0), std::sinh(1.0), 0.0}, kUnit},
                                          {{std::cosh(1.0), -std::sinh(1.0), 0.0}, kUnit}};
  const LorentzPoint mid = fuse(pair, confidence_weights(pair));
  EXPECT_NEAR(mid.time(), 1.0, 1e-12);
  EXPECT_NEAR(mid.space()[0], 0.0, 1e-12);

  const std::vector<LorentzPoint> one = {pair[0]};
  const LorentzPoint same = fuse(one, Vector{0.7});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(same.coords[i], pair[0].coords[i], 1e-12);
}

TEST(Forward, OrthogonalHyperplaneGivesHalf) {
  ModelState state = init_model({"a", "b"}, {3, 3}, 4, 1);
  auto owned = random_batch(2, 10, 2, 3);
  // Zero projections send every pixel to the origin, and init gives w0 = 0.
  for (auto& p : state.projections) std::fill(p.begin(), p.end(), 0.0);
  for (double p : forward(owned.batch, state)) EXPECT_DOUBLE_EQ(p, 0.5);
}

TEST(Forward, SinglePixelMatchesComposition) {
  const ModelState state = init_model({"a", "b"}, {3, 2}, 4, 5);
  const Vector f0 = {0.3, -0.2, 0.5}, f1 = {-0.4, 0.1};
  OwnedBatch owned;
  owned.storage = {f0, f1};
  owned.batch.labels = {1};
  owned.finish(2);
  const Curvature c = state.curvature();
  std::vector<LorentzPoint> pts = {hyperbolic_linear(lift(f0, c), state.projections[0], 4, 3),
                                   hyperbolic_linear(lift(f1, c), state.projections[1], 4, 2)};
  const LorentzPoint fused = lorentzian_centroid(pts, confidence_weights(pts));
  const double expected = anomaly_probability(hyperplane_logit(fused, {state.hyperplane, c}));
  EXPECT_NEAR(forward(owned.batch, state)[0], expected, 1e-12);
}

TEST(Forward, PermutationEquivariant) {
  const ModelState state = init_model({"a", "b"}, {4, 4}, 6, 9);
  auto owned = random_batch(4, 12, 2, 4);
  const auto p = forward(owned.batch, state);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  OwnedBatch shuffled;
  for (std::size_t i : perm) {
    shuffled.storage.push_back(owned.storage[2 * i]);
    shuffled.storage.push_back(owned.storage[2 * i + 1]);
    shuffled.batch.labels.push_back(owned.batch.labels[i]);
  }
  shuffled.finish(2);
  const auto q = forward(shuffled.batch, state);
  for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(q[k], p[perm[k]]);
}

TEST(Forward, IntermediatesStayOnHyperboloid) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const double c_value = std::pow(10.0, -2.0 + 4.0 * (trial % 11) / 10.0);
    const ModelState state = init_model({"a", "b"}, {8, 8}, 5, trial, c_value);
    const Curvature c = state.curvature();
    std::vector<LorentzPoint> pts;
    for (std::size_t l = 0; l < 2; ++l) {
      const LorentzPoint z = lift(random_vector(rng, 8, 1.5), c);
      EXPECT_LT(hyperboloid_residual(z), 1e-6);
      pts.push_back(hyperbolic_linear(z, state.projections[l], 5, 8));
      EXPECT_LT(hyperboloid_residual(pts.back()), 1e-6);
    }
    EXPECT_LT(hyperboloid_residual(fuse(pts, confidence_weights(pts))), 1e-6);
  }
}

TEST(Bce, Examples) {
  const Vector half(4, 0.5);
  EXPECT_NEAR(bce_loss(half, std::vector<int>{1, 0, 1, 0}), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_loss(half, std::vector<int>{0, 0, 0, 0}), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_loss(Vector{1 - 1e-12, 1e-12}, std::vector<int>{1, 0}), 0.0, 1e-9);

  // separate class means: 1 anomalous vs 3 normal pixels weigh the same
  const Vector p = {0.8, 0.1, 0.1, 0.1};
  EXPECT_NEAR(bce_loss(p, std::vector<int>{1, 0, 0, 0}), -std::log(0.8) - std::log(0.9), 1e-12);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int i = 0; i < 50; ++i) {
    Vector logits(7), probs(7);
    std::vector<int> labels(7);
    for (std::size_t k = 0; k < 7; ++k) {
      logits[k] = u(rng);
      probs[k] = anomaly_probability(logits[k]);
      labels[k] = static_cast<int>((k + i) % 3 == 0);
    }
    const double from_p = bce_loss(probs, labels);
    EXPECT_GE(from_p, 0.0);
    EXPECT_NEAR(bce_loss_from_logits(logits, labels), from_p, 1e-10);
  }
  // far tails stay finite from logits
  EXPECT_TRUE(std::isfinite(bce_loss_from_logits(Vector{800.0, -800.0}, std::vector<int>{1, 0})));
  EXPECT_NEAR(bce_loss_from_logits(Vector{800.0}, std::vector<int>{1}), 800.0, 1e-9);
}

TEST(ImageScore, Examples) {
  EXPECT_EQ(image_score(Vector{0, 0, 0}), 0.0);
  EXPECT_EQ(image_score(Vector{0.9}), 0.9);
  EXPECT_EQ(image_score(Vector{0.2, 0.9, 0.1, 0.05, 0.3}), 0.9);
  EXPECT_THROW(image_score(Vector{}), std::invalid_argument);
}

TEST(Gradient, MatchesCentralDifferencesOnTrainingLoss) {
  ModelState state = init_model({"a", "b"}, {4, 4}, 3, 17, 0.7);
  auto owned = random_batch(8, 8, 2, 4);
  const auto g = loss_and_gradient(owned.batch, state, 3);
  EXPECT_NEAR(g.loss, bce_loss_from_logits(forward_logits(owned.batch, state), owned.batch.labels), 1e-12);

  const auto loss_at = [&](const ModelState& s) {
    return bce_loss_from_logits(forward_logits(owned.batch, s), owned.batch.labels);
  };
  const double h = 1e-5;
  const auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = loss_at(state);
    param = saved - h;
    const double down = loss_at(state);
    param = saved;
    const double numeric = (up - down) / (2 * h);
    EXPECT_LT(std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-7}), 1e-4);
  };
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t k = 0; k < state.projections[l].size(); ++k) check(state.projections[l][k], g.projection_grads[l][k]);
  }
  for (std::size_t k = 0; k < state.hyperplane.size(); ++k) check(state.hyperplane[k], g.hyperplane_grad[k]);
  check(state.log_c, g.log_c_grad);

  // chunking does not change the result
  const auto whole = loss_and_gradient(owned.batch, state, 512);
  EXPECT_NEAR(whole.loss, g.loss, 1e-12);
  EXPECT_NEAR(whole.log_c_grad, g.log_c_grad, 1e-12);
}

TEST(Training, TwoClustersReachFullAccuracy) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.3);
  OwnedBatch owned;
  for (int i = 0; i < 400; ++i) {
    const int label = i % 2;
    owned.storage.push_back({(label ? 2.0 : -1.0) + noise(rng), (label ? 1.0 : 0.0) + noise(rng)});
    owned.batch.labels.push_back(label);
  }
  owned.finish(1);

  ModelState state = init_model({"a"}, {2}, 16, 3);
  OptimState optim;
  for (int step = 0; step < 200; ++step) {
    const auto g = loss_and_gradient(owned.batch, state);
    std::vector<Vector*> params = {&state.projections[0], &state.hyperplane};
    std::vector<Vector> grads = {g.projection_grads[0], g.hyperplane_grad};
    adam_step(params, grads, optim, 0.05);
    revalidate_hyperplane(state.hyperplane, step);
  }
  const auto p = forward(owned.batch, state);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) correct += (p[i] > 0.5) == (owned.batch.labels[i] == 1);
  EXPECT_EQ(correct, p.size());
}

TEST(Init, Ranges) {
  const ModelState s = init_model({"a", "b"}, {16, 4}, 8, 42);
  for (double v : s.projections[0]) EXPECT_LE(std::abs(v), 0.25);
  for (double v : s.projections[1]) EXPECT_LE(std::abs(v), 0.5);
  EXPECT_EQ(s.hyperplane[0], 0.0);
  EXPECT_NEAR(lorentz_inner(s.hyperplane, s.hyperplane), 1.0, 1e-12);
  EXPECT_EQ(s.projections[0].size(), 8u * 16u);
  EXPECT_EQ(s.hyperplane.size(), 9u);
}

TEST(Init, RevalidateHyperplane) {
  Vector timelike = {1.0, 0.1, 0.0};
  EXPECT_TRUE(revalidate_hyperplane(timelike, 3));
  EXPECT_GT(lorentz_inner(timelike, timelike), 1e-9);
  Vector spacelike = {0.2, 1.0, 0.0};
  const Vector before = spacelike;
  EXPECT_FALSE(revalidate_hyperplane(spacelike, 3));
  EXPECT_EQ(spacelike, before);
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "hypad_ckpt_test";
  std::filesystem::remove_all(dir);
  ModelState s = init_model({"layer_2", "layer_3"}, {5, 7}, 4, 8, 2.5, false);
  s.patch = 5;
  OptimState opt;
  opt.step = 12;
  opt.config.beta1 = 0.8;
  opt.first_moment = {Vector(20, 0.25), Vector(28, -1.0), Vector(5, 3.0)};
  opt.second_moment = {Vector(20, 0.5), Vector(28, 2.0), Vector(5, 1e-9)};
  write_checkpoint(dir, s, &opt);

  OptimState back_opt;
  const ModelState back = read_checkpoint(dir, &back_opt);
  EXPECT_EQ(back.levels, s.levels);
  EXPECT_EQ(back.d_in, s.d_in);
  EXPECT_EQ(back.d_out, s.d_out);
  EXPECT_EQ(back.projections, s.projections);
  EXPECT_EQ(back.hyperplane, s.hyperplane);
  EXPECT_EQ(back.log_c, s.log_c);
  EXPECT_EQ(back.learn_curvature, false);
  EXPECT_EQ(back.patch, 5u);
  EXPECT_EQ(back_opt.step, 12u);
  EXPECT_EQ(back_opt.config.beta1, 0.8);
  EXPECT_EQ(back_opt.first_moment, opt.first_moment);
  EXPECT_EQ(back_opt.second_moment, opt.second_moment);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, Errors) {
  EXPECT_ANY_THROW(read_checkpoint("/nonexistent/hypad_ckpt"));
  ModelState bad = init_model({"a"}, {2}, 2, 1);
  bad.hyperplane[1] = std::nan("");
  EXPECT_ANY_THROW(bad.validate());
  bad = init_model({"a"}, {2}, 2, 1);
  bad.projections[0].pop_back();
  EXPECT_THROW(bad.validate(), DimensionError);
}
