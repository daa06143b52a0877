// Reverse-mode differentiation over dense real vectors.
//
// A Tape records nodes eagerly (values are computed at record time) together
// with a pullback that maps the node's adjoint onto its parents. Nodes are
// appended in evaluation order, so the reverse insertion order is a valid
// reverse topological order. One tape serves one backward pass.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hypad/geometry.hpp"

namespace hypad::ad {

class Tape;

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Vector& value() const;
  double scalar() const;
  std::size_t size() const { return value().size(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Adds the contribution of `upstream` (adjoint of the node) to the parents.
using Pullback = std::function<void(Tape& tape, std::span<const double> upstream)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Vector value);
  Var constant(double value) { return constant(Vector{value}); }

  /// Registers a trainable leaf. Parameters are indexed in registration order.
  Var parameter(Vector value);
  std::size_t parameter_count() const { return params_.size(); }
  Var parameter_at(std::size_t index) const { return Var(const_cast<Tape*>(this), params_.at(index)); }

  /// Appends an interior node. `parents` decides whether the node carries a
  /// gradient at all; pullbacks of nodes that do not are never invoked.
  Var record(Vector value, std::initializer_list<Var> parents, Pullback pullback);
  Var record(Vector value, std::span<const Var> parents, Pullback pullback);

  const Vector& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// Adds g into the adjoint of `target`; no-op for constants.
  void accumulate(Var target, std::span<const double> g);
  void accumulate(Var target, std::size_t index, double g);
  /// Adjoint buffer of `target` for in-place accumulation, allocated on
  /// first use; nullptr for constants.
  Vector* adjoint(Var target);

  /// Propagates d(loss)/d(node) for every node recorded before `loss`.
  /// Throws TapeError on a non-scalar loss or a second call.
  void backward(Var loss);
  bool backward_done() const { return backward_done_; }

  /// Adjoint of a node after backward(); zeros when the node did not
  /// influence the loss.
  Vector gradient(Var v) const;
  std::vector<Vector> parameter_gradients() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Vector value;
    Vector grad;
    Pullback pullback;
    bool requires_grad = false;
  };

  void check_owned(Var v) const;

  // deque keeps references to node values stable while recording.
  std::deque<Node> nodes_;
  std::vector<std::size_t> params_;
  bool backward_done_ = false;
};

// Elementwise arithmetic. Binary ops accept equal sizes or a size-1 operand
// that broadcasts against the other.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var sum(Var a);
Var dot(Var a, Var b);
Var squared_norm(Var a);
/// |a|_2 with a zero subgradient at a = 0.
Var euclidean_norm(Var a);

/// Row-major matrix (rows x cols, stored flat in `matrix`) times vector.
Var matvec(Var matrix, std::size_t rows, std::size_t cols, Var x);
/// Same, for an input that is not on the tape. The span must outlive the
/// tape's backward pass.
Var matvec(Var matrix, std::size_t rows, std::size_t cols, std::span<const double> x);

Var concat(Var a, Var b);
Var slice(Var a, std::size_t offset, std::size_t length);
Var element(Var a, std::size_t index);

Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var abs(Var a);
Var cosh(Var a);
Var sinh(Var a);
Var asinh(Var a);
/// sinh(x)/x with the small-argument series below kSmallNorm.
Var sinhc(Var a);
/// log(1 + exp(x)), stable for large |x|.
Var softplus(Var a);
/// 1 / (1 + exp(-x)), stable for large |x|.
Var sigmoid(Var a);

/// Treated as locally constant: carries no gradient.
Var sign(Var a);

inline constexpr double kNormEpsilon = 1e-12;

Var lorentz_inner(Var a, Var b);
/// sqrt(|x| + kNormEpsilon) for scalar x.
Var guarded_sqrt_abs(Var x);
Var lorentz_norm(Var v);

// Hyperbolic composites. `log_c` is the scalar log-curvature node.

Var curvature(Var log_c);
Var sqrt_curvature(Var log_c);

/// Full (n+1)-vector exp_O(v) for a space-part tangent vector v.
Var expmap_origin(Var v_space, Var log_c);
/// Space part W z_space with the time component rebuilt on the hyperboloid.
Var hyperbolic_linear(Var matrix, std::size_t rows, std::size_t cols, Var z, Var log_c);
/// Euclidean norm of the Poincare-ball image of z.
Var poincare_radius(Var z, Var log_c);
Var lorentzian_centroid(std::span<const Var> points, std::span<const Var> weights, Var log_c);
Var hyperplane_logit(Var z, Var w, Var log_c);

}  // namespace hypad::ad
