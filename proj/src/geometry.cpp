#include "hypad/geometry.hpp"

#include <algorithm>
#include <numeric>

namespace hypad {

namespace {

double squared_norm(std::span<const double> v) {
  return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
}

void require_same_curvature(const LorentzPoint& a, const LorentzPoint& b) {
  if (a.curvature.log_value() != b.curvature.log_value()) {
    throw InvalidPointError("points live on hyperboloids of different curvature");
  }
  if (a.coords.size() != b.coords.size()) {
    throw DimensionError("points have different ambient dimension");
  }
}

}  // namespace

double lorentz_inner(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("lorentz_inner: length mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) {
    throw DimensionError("lorentz_inner: vectors need at least 2 components");
  }
  double space = 0.0;
  for (std::size_t i = 1; i < a.size(); ++i) space += a[i] * b[i];
  return space - a[0] * b[0];
}

double lorentz_norm(std::span<const double> v) { return std::sqrt(std::abs(lorentz_inner(v, v))); }

LorentzPoint origin(Curvature c, std::size_t n) {
  if (n < 1) throw DimensionError("origin: manifold dimension must be >= 1");
  LorentzPoint o{Vector(n + 1, 0.0), c};
  o.coords[0] = 1.0 / c.sqrt_value();
  return o;
}

double hyperboloid_residual_abs(const LorentzPoint& z) {
  return std::abs(lorentz_inner(z.coords, z.coords) + 1.0 / z.curvature.value());
}

double hyperboloid_residual(const LorentzPoint& z) {
  const double scale = std::max(1.0, squared_norm(z.coords));
  return hyperboloid_residual_abs(z) / scale;
}

double sinhc(double x) {
  if (std::abs(x) < kSmallNorm) return 1.0 + x * x / 6.0;
  return std::sinh(x) / x;
}

LorentzPoint expmap_origin(std::span<const double> v_space, Curvature c) {
  if (v_space.empty()) throw DimensionError("expmap_origin: empty tangent vector");
  const double sqrt_c = c.sqrt_value();
  const double x = sqrt_c * std::sqrt(squared_norm(v_space));
  LorentzPoint z{Vector(v_space.size() + 1), c};
  z.coords[0] = std::cosh(x) / sqrt_c;
  const double s = sinhc(x);
  std::transform(v_space.begin(), v_space.end(), z.coords.begin() + 1, [s](double v) { return s * v; });
  return z;
}

Vector logmap_origin(const LorentzPoint& z, double tolerance) {
  if (z.coords.size() < 2) throw DimensionError("logmap_origin: point needs at least 2 components");
  if (!(z.time() > 0.0) || hyperboloid_residual(z) > tolerance) {
    throw InvalidPointError("logmap_origin: point is not on the hyperboloid");
  }
  const auto space = z.space();
  const double space_norm = std::sqrt(squared_norm(space));
  Vector v(space.size(), 0.0);
  if (space_norm == 0.0) return v;
  const double sqrt_c = z.curvature.sqrt_value();
  // asinh keeps full precision for small norms where acosh(sqrt(c) z0) does not.
  const double dist = std::asinh(sqrt_c * space_norm) / sqrt_c;
  const double f = dist / space_norm;
  std::transform(space.begin(), space.end(), v.begin(), [f](double s) { return f * s; });
  return v;
}

Vector lorentz_to_poincare(const LorentzPoint& z) {
  const double denom = z.time() + 1.0 / z.curvature.sqrt_value();
  const auto space = z.space();
  Vector p(space.size());
  std::transform(space.begin(), space.end(), p.begin(), [denom](double s) { return s / denom; });
  return p;
}

LorentzPoint reproject(std::span<const double> space, Curvature c) {
  LorentzPoint z{Vector(space.size() + 1), c};
  z.coords[0] = std::sqrt(squared_norm(space) + 1.0 / c.value());
  std::copy(space.begin(), space.end(), z.coords.begin() + 1);
  return z;
}

LorentzPoint lorentzian_centroid(std::span<const LorentzPoint> points, std::span<const double> weights) {
  if (points.empty()) throw DimensionError("lorentzian_centroid: no points");
  if (points.size() != weights.size()) throw DimensionError("lorentzian_centroid: one weight per point required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("lorentzian_centroid: weights must be non-negative");
    total += w;
  }
  if (total == 0.0) throw DegenerateError("lorentzian_centroid: all weights are zero");

  const Curvature c = points.front().curvature;
  Vector sum(points.front().coords.size(), 0.0);
  for (std::size_t l = 0; l < points.size(); ++l) {
    require_same_curvature(points.front(), points[l]);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += weights[l] * points[l].coords[k];
  }
  const double scale = 1.0 / (c.sqrt_value() * lorentz_norm(sum));
  for (double& v : sum) v *= scale;
  return LorentzPoint{std::move(sum), c};
}

double hyperplane_distance(const LorentzPoint& z, const Hyperplane& h) {
  const double ww = lorentz_inner(h.normal, h.normal);
  if (!(ww > 0.0)) throw DegenerateError("hyperplane normal is not spacelike");
  const double sqrt_c = h.curvature.sqrt_value();
  return std::abs(std::asinh(sqrt_c * lorentz_inner(h.normal, z.coords) / std::sqrt(ww))) / sqrt_c;
}

double hyperplane_logit(const LorentzPoint& z, const Hyperplane& h) {
  const double inner = lorentz_inner(h.normal, z.coords);
  const double sign = inner > 0.0 ? 1.0 : (inner < 0.0 ? -1.0 : 0.0);
  return sign * lorentz_norm(h.normal) * hyperplane_distance(z, h);
}

double anomaly_probability(double logit) {
  if (logit >= 0.0) {
    const double e = std::exp(-logit);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(logit));
}

}  // namespace hypad
