// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Expected values come from the oracles in oracles.hpp or from
// closed forms, never from the code under test.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <algorithm>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "hypad/geometry.hpp"
#include "hypad/gradcheck.hpp"
#include "hypad/metrics.hpp"
#include "hypad/synthesis.hpp"
#include "hypad/toy.hpp"
#include "hypad/train.hpp"
#include "oracles.hpp"

using namespace hypad;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Vector random_direction(std::mt19937_64& rng, std::size_t n, double radius) {
  std::normal_distribution<double> g;
  Vector v(n);
  double norm = 0;
  for (double& x : v) norm += (x = g(rng)) * x;
  for (double& x : v) x *= radius / std::sqrt(norm);
  return v;
}

LorentzPoint random_point(std::mt19937_64& rng, std::size_t n, Curvature c, double max_radius) {
  std::uniform_real_distribution<double> r(0.0, max_radius);
  return expmap_origin(random_direction(rng, n, r(rng)), c);
}

Outcome hyperboloid_suite() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> log_c(std::log(1e-2), std::log(1e2));
  std::uniform_real_distribution<double> radius(0.0, 10.0);
  std::uniform_int_distribution<std::size_t> dim(1, 16);
  double worst_residual = 0, worst_roundtrip = 0;
  for (int i = 0; i < 10000; ++i) {
    const Curvature c = Curvature::from_log(log_c(rng));
    const Vector v = random_direction(rng, dim(rng), radius(rng));
    const LorentzPoint z = expmap_origin(v, c);
    worst_residual = std::max(worst_residual, hyperboloid_residual(z));
    const Vector back = logmap_origin(z);
    for (std::size_t k = 0; k < v.size(); ++k) worst_roundtrip = std::max(worst_roundtrip, std::abs(back[k] - v[k]));
  }
  return {worst_residual < 1e-6 && worst_roundtrip < 1e-6,
          "max residual " + fmt(worst_residual) + ", max log(exp(v)) - v " + fmt(worst_roundtrip)};
}

Outcome centroid_suite() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> log_c(std::log(1e-2), std::log(1e2));
  std::uniform_real_distribution<double> weight(0.05, 3.0), scale(1e-3, 1e3);
  double idem = 0, sym = 0, residual = 0, rescale = 0;
  for (int i = 0; i < 1000; ++i) {
    const Curvature c = Curvature::from_log(log_c(rng));
    const std::size_t n = 2 + i % 7;
    const double r = 3.0 / c.sqrt_value();

    const LorentzPoint p = random_point(rng, n, c, r);
    const std::vector<LorentzPoint> copies = {p, p, p};
    const LorentzPoint same = lorentzian_centroid(copies, Vector{weight(rng), weight(rng), weight(rng)});
    for (std::size_t k = 0; k <= n; ++k) idem = std::max(idem, std::abs(same.coords[k] - p.coords[k]) / std::max(1.0, std::abs(p.coords[k])));

    // z and its reflection -z_space average to the origin
    LorentzPoint mirror = p;
    for (std::size_t k = 1; k <= n; ++k) mirror.coords[k] = -mirror.coords[k];
    const double w = weight(rng);
    const std::vector<LorentzPoint> pair = {p, mirror};
    const LorentzPoint mid = lorentzian_centroid(pair, Vector{w, w});
    sym = std::max(sym, std::abs(mid.time() - 1.0 / c.sqrt_value()) * c.sqrt_value());
    for (double s : mid.space()) sym = std::max(sym, std::abs(s) * c.sqrt_value());

    std::vector<LorentzPoint> pts;
    Vector ws;
    for (std::size_t k = 0; k < 1 + i % 5; ++k) {
      pts.push_back(random_point(rng, n, c, r));
      ws.push_back(weight(rng));
    }
    const LorentzPoint m = lorentzian_centroid(pts, ws);
    residual = std::max(residual, hyperboloid_residual(m));
    const double a = scale(rng);
    Vector scaled = ws;
    for (double& x : scaled) x *= a;
    const LorentzPoint m2 = lorentzian_centroid(pts, scaled);
    for (std::size_t k = 0; k <= n; ++k) rescale = std::max(rescale, std::abs(m2.coords[k] - m.coords[k]) / std::max(1.0, std::abs(m.coords[k])));
  }
  return {idem < 1e-9 && sym < 1e-9 && residual < 1e-6 && rescale < 1e-9,
          "idempotence " + fmt(idem) + ", symmetric pair " + fmt(sym) + ", residual " + fmt(residual) +
              ", rescale " + fmt(rescale)};
}

Outcome hyperplane_suite() {
  const Curvature unit = Curvature::from_value(1.0);
  double analytic = 0;
  for (double t : {0.1, 0.7, 2.0}) {
    const LorentzPoint z{{std::cosh(t), std::sinh(t), 0.0}, unit};
    analytic = std::max(analytic, std::abs(hyperplane_distance(z, {{0.0, 1.0, 0.0}, unit}) - t));
  }
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> log_c(std::log(1e-2), std::log(1e2)), scale(1e-3, 1e3);
  double on_plane = 0, invariance = 0;
  for (int i = 0; i < 1000; ++i) {
    const Curvature c = Curvature::from_log(log_c(rng));
    const std::size_t n = 2 + i % 6;
    // spacelike w = (0, u): points with space part orthogonal to u lie on it
    const Vector u = random_direction(rng, n, 1.0);
    Vector w(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) w[k + 1] = u[k];
    Vector v = random_direction(rng, n, 1.0 / c.sqrt_value());
    double dot = 0;
    for (std::size_t k = 0; k < n; ++k) dot += v[k] * u[k];
    for (std::size_t k = 0; k < n; ++k) v[k] -= dot * u[k];
    on_plane = std::max(on_plane, hyperplane_distance(expmap_origin(v, c), {w, c}));

    w[0] = 0.3 * (2.0 * (i % 2) - 1.0);  // still spacelike since |u| = 1
    const LorentzPoint z = random_point(rng, n, c, 2.0 / c.sqrt_value());
    const double d = hyperplane_distance(z, {w, c});
    Vector w2 = w;
    const double a = scale(rng);
    for (double& x : w2) x *= a;
    invariance = std::max(invariance, std::abs(hyperplane_distance(z, {w2, c}) - d));
  }
  return {on_plane < 1e-9 && invariance < 1e-9 && analytic < 1e-9,
          "on-plane " + fmt(on_plane) + ", scale invariance " + fmt(invariance) + ", analytic " + fmt(analytic)};
}

Outcome gradient_check() {
  GradcheckOptions opt;
  opt.d_in = 4;
  opt.d_out = 3;
  opt.levels = 2;
  opt.batch = 8;
  opt.step = 1e-5;
  opt.tolerance = 1e-4;
  double worst = 0;
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    opt.seed = seed;
    const auto r = run_gradcheck(opt);
    worst = std::max(worst, r.max_relative_error);
    ok = ok && r.passed && r.checked == 2 * 3 * 4 + 4 + 1;
  }
  const std::string cmd = std::string(HYPAD_BINARY) + " gradcheck > /dev/null";
  const int status = std::system(cmd.c_str());
  const bool cli_ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  return {ok && cli_ok, "max relative error " + fmt(worst) + " over 5 seeds, CLI exit " +
                            std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1)};
}

Outcome auroc_oracle() {
  std::mt19937_64 rng(404);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    const std::size_t levels = 1 + rng() % (trial % 2 ? 5 : 1000);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % levels);
      labels[i] = static_cast<int>(rng() % 2);
    }
    // both classes present
    const std::size_t a = rng() % n, b = (a + 1 + rng() % (n - 1)) % n;
    labels[a] = 1;
    labels[b] = 0;
    if (auroc(scores, labels) != oracle::pair_count_auroc(scores, labels)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches in 500 sets"};
}

Outcome poisson_blend_check() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor target({24, 24, 1}, DType::F64), source({20, 20, 1}, DType::F64);
  for (double& v : target.values()) v = u(rng);
  for (double& v : source.values()) v = u(rng);
  const Rect src{1, 2, 16, 16}, dst{4, 5, 16, 16};
  const Tensor out = poisson_blend(target, source, src, dst, 1e-6, 20000);

  // dense oracle over the 14 x 14 interior
  const std::size_t m = 14;
  std::vector<std::vector<double>> a(m * m, std::vector<double>(m * m, 0.0));
  std::vector<double> b(m * m, 0.0);
  for (std::size_t y = 1; y <= m; ++y) {
    for (std::size_t x = 1; x <= m; ++x) {
      const std::size_t r = (y - 1) * m + (x - 1);
      a[r][r] = 4;
      b[r] = 4 * source.at(src.y + y, src.x + x, 0);
      const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const std::size_t qy = y + dy[k], qx = x + dx[k];
        b[r] -= source.at(src.y + qy, src.x + qx, 0);
        if (qy == 0 || qx == 0 || qy == m + 1 || qx == m + 1) {
          b[r] += target.at(dst.y + qy, dst.x + qx, 0);
        } else {
          a[r][(qy - 1) * m + (qx - 1)] = -1;
        }
      }
    }
  }
  const auto expected = oracle::dense_solve(a, b);
  double err = 0;
  for (std::size_t y = 1; y <= m; ++y) {
    for (std::size_t x = 1; x <= m; ++x) {
      err = std::max(err, std::abs(out.at(dst.y + y, dst.x + x, 0) - expected[(y - 1) * m + (x - 1)]));
    }
  }

  Tensor flat({16, 16, 3}, DType::F64);
  for (double& v : flat.values()) v = 0.37;
  double identity = 0;
  const Tensor same = poisson_blend(flat, flat, {0, 0, 16, 16}, {0, 0, 16, 16});
  for (std::size_t i = 0; i < flat.numel(); ++i) identity = std::max(identity, std::abs(same.values()[i] - 0.37));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = cutpaste(flat, seed, 2, 12, BlendMode::Poisson);
    for (std::size_t i = 0; i < flat.numel(); ++i) identity = std::max(identity, std::abs(r.image.values()[i] - 0.37));
  }
  return {err < 1e-4 && identity < 1e-9, "max |blend - dense solve| " + fmt(err) + ", constant-image deviation " + fmt(identity)};
}

TrainConfig toy_config() {
  TrainConfig c;  // defaults: lr 1e-3, batch 32, patch 3, d_out 128, learnable c
  c.epochs = 200;  // 10 training images, one step per epoch
  c.validate_every = 0;
  return c;
}

Outcome end_to_end() {
  const ToyData toy = make_toy({}, 11);
  const PreparedSet tr = prepare(toy.train, 3), te = prepare(toy.test, 3);
  std::size_t anomalous = 0, normal = 0;
  for (const auto& img : tr.images) {
    for (double v : img.pixel_labels->values()) (v >= 0.5 ? anomalous : normal)++;
  }
  TrainConfig c = toy_config();
  c.seed = 1;
  const auto result = train(tr, c);
  const auto report = evaluate(result.state, te);
  const double i = report.image_auroc.value_or(NAN), p = report.pixel_auroc.value_or(NAN);
  return {result.optim.step == 200 && anomalous == 500 && normal == 500 && i >= 0.95 && p >= 0.95,
          "I_AUROC " + fmt(i) + ", P_AUROC " + fmt(p) + " after " + std::to_string(result.optim.step) + " steps on " +
              std::to_string(anomalous) + "/" + std::to_string(normal) + " pixels"};
}

Outcome few_shot_trend() {
  ToyConfig tc;
  tc.train_sources = 25;
  const ToyData toy = make_toy(tc, 12);
  const PreparedSet tr = prepare(toy.train, 3), te = prepare(toy.test, 3);
  const std::size_t ks[] = {1, 25};
  const auto seeds = run_seeds(0, 5);
  const auto rows = few_shot_harness(tr, te, ks, seeds, toy_config());
  const double k1 = rows[0].report.image ? rows[0].report.image->mean : NAN;
  const double k25 = rows[1].report.image ? rows[1].report.image->mean : NAN;
  return {k25 >= k1 - 0.02, "mean I_AUROC K=1 " + fmt(k1) + ", K=25 " + fmt(k25) + " over 5 seeds"};
}

Outcome ablation_smoke() {
  const ToyData toy = make_toy({}, 13);
  const double values[] = {0.01, 0.1, 1, 10, 100};
  const auto seeds = run_seeds(0, 3);
  const auto rows = ablation_harness(toy.train, toy.test, AblationAxis::Curvature, values, seeds, toy_config());
  bool finite = rows.size() == 6;
  double best_fixed = -1, learnable = NAN;
  std::ostringstream detail;
  for (const auto& r : rows) {
    finite = finite && r.report.finite_losses();
    const double mean = r.report.image ? r.report.image->mean : NAN;
    detail << r.value << "=" << fmt(mean) << " ";
    if (r.value == "learnable") {
      learnable = mean;
    } else {
      best_fixed = std::max(best_fixed, mean);
    }
  }
  detail << "(finite losses: " << (finite ? "yes" : "no") << ")";
  return {finite && learnable >= best_fixed - 0.05, detail.str()};
}

}  // namespace

int main() {
  struct Criterion {
    std::string name;
    std::function<Outcome()> run;
    double budget_seconds;  // 0: no runtime bound
  };
  const std::vector<Criterion> criteria = {
      {"hyperboloid suite", hyperboloid_suite, 5},
      {"centroid suite", centroid_suite, 0},
      {"hyperplane suite", hyperplane_suite, 0},
      {"gradient check", gradient_check, 10},
      {"AUROC oracle", auroc_oracle, 0},
      {"Poisson blend", poisson_blend_check, 0},
      {"end-to-end toy run", end_to_end, 60},
      {"few-shot trend", few_shot_trend, 0},
      {"ablation smoke", ablation_smoke, 0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt(secs) + " s";
    if (c.budget_seconds > 0) {
      timing += " / limit " + fmt(c.budget_seconds) + " s";
      if (secs >= c.budget_seconds) o.passed = false;
    }
    failures += o.passed ? 0 : 1;
    std::printf("%s %s: %s [%s]\n", o.passed ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
