// Lorentz (hyperboloid) model of hyperbolic space with curvature c > 0.
//
// Points live on the upper sheet {z : <z,z>_L = -1/c, z0 > 0} of Minkowski
// space, where <a,b>_L = a_space . b_space - a0 * b0. All routines operate in
// binary64 and are pure.

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypad {

using Vector = std::vector<double>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidPointError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Curvature stored through its logarithm so that c = exp(log_c) > 0 for any
/// finite parameter value.
class Curvature {
 public:
  constexpr Curvature() = default;

  static Curvature from_log(double log_c) { return Curvature(log_c); }
  static Curvature from_value(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw std::invalid_argument("curvature must be positive and finite, got " + std::to_string(c));
    }
    return Curvature(std::log(c));
  }

  double log_value() const { return log_c_; }
  double value() const { return std::exp(log_c_); }
  double sqrt_value() const { return std::exp(0.5 * log_c_); }

 private:
  explicit Curvature(double log_c) : log_c_(log_c) {}
  double log_c_ = 0.0;
};

/// Ambient coordinates (z0, z_1..z_n) tied to a curvature.
struct LorentzPoint {
  Vector coords;
  Curvature curvature;

  std::size_t dim() const { return coords.size() - 1; }
  double time() const { return coords.front(); }
  std::span<const double> space() const { return std::span<const double>(coords).subspan(1); }
};

/// A tangent vector together with its base point. Features enter the model as
/// tangent vectors at the origin, whose time component is zero.
struct TangentVector {
  Vector coords;
  LorentzPoint base;
};

/// Hyperplane {y : <w,y>_L = 0}; w must be spacelike.
struct Hyperplane {
  Vector normal;
  Curvature curvature;
};

double lorentz_inner(std::span<const double> a, std::span<const double> b);

/// sqrt(|<v,v>_L|)
double lorentz_norm(std::span<const double> v);

LorentzPoint origin(Curvature c, std::size_t n);

/// |<z,z>_L + 1/c|, scaled by max(1, |z|_E^2) so the check stays meaningful
/// when the coordinates grow like cosh(sqrt(c)|v|) and binary64 can no
/// longer resolve an absolute 1/c offset.
double hyperboloid_residual(const LorentzPoint& z);

/// Unscaled |<z,z>_L + 1/c|.
double hyperboloid_residual_abs(const LorentzPoint& z);

/// Below this tangent norm sinh(x)/x is evaluated by its Taylor expansion.
inline constexpr double kSmallNorm = 1e-8;

/// sinh(x)/x, continuous at 0.
double sinhc(double x);

LorentzPoint expmap_origin(std::span<const double> v_space, Curvature c);

/// Inverse of expmap_origin. Throws InvalidPointError when the point is off
/// the hyperboloid by more than `tolerance` (scaled residual).
Vector logmap_origin(const LorentzPoint& z, double tolerance = 1e-4);

/// z_space / (z0 + 1/sqrt(c)); the result lies strictly inside the ball of
/// radius 1/sqrt(c).
Vector lorentz_to_poincare(const LorentzPoint& z);

/// Renormalises an arbitrary space part onto the hyperboloid by recomputing
/// z0 = sqrt(|z_space|^2 + 1/c).
LorentzPoint reproject(std::span<const double> space, Curvature c);

/// Weighted Lorentzian centroid (1/sqrt(c)) * z' / |z'|_L with
/// z' = sum_l w_l f_l.
LorentzPoint lorentzian_centroid(std::span<const LorentzPoint> points, std::span<const double> weights);

double hyperplane_distance(const LorentzPoint& z, const Hyperplane& h);

/// sign(<w,z>_L) * |w|_L * distance(z, H_w)
double hyperplane_logit(const LorentzPoint& z, const Hyperplane& h);

/// 1 / (1 + exp(logit)); large positive logits mean "normal".
double anomaly_probability(double logit);

}  // namespace hypad
