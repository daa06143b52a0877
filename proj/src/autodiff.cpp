#include "hypad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hypad::ad {

const Vector& Var::value() const {
  if (tape_ == nullptr) throw TapeError("use of an unbound variable");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Vector& v = value();
  if (v.size() != 1) throw TapeError("expected a scalar node, got size " + std::to_string(v.size()));
  return v[0];
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw TapeError("variable belongs to a different tape");
}

Var Tape::constant(Vector value) {
  if (backward_done_) throw TapeError("tape is closed after backward()");
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Vector value) {
  if (backward_done_) throw TapeError("tape is closed after backward()");
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  params_.push_back(nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Vector value, std::initializer_list<Var> parents, Pullback pullback) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(pullback));
}

Var Tape::record(Vector value, std::span<const Var> parents, Pullback pullback) {
  if (backward_done_) throw TapeError("tape is closed after backward()");
  bool needs = false;
  for (const Var& p : parents) {
    check_owned(p);
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(pullback) : Pullback{}, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var target, std::span<const double> g) {
  Node& n = nodes_[target.id()];
  if (!n.requires_grad) return;
  if (g.size() != n.value.size()) throw TapeError("adjoint size mismatch");
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Tape::accumulate(Var target, std::size_t index, double g) {
  Node& n = nodes_[target.id()];
  if (!n.requires_grad) return;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  n.grad[index] += g;
}

Vector* Tape::adjoint(Var target) {
  Node& n = nodes_[target.id()];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return &n.grad;
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (backward_done_) throw TapeError("backward() already ran on this tape");
  if (nodes_[loss.id()].value.size() != 1) throw TapeError("backward() needs a scalar loss");
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = {1.0};
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.pullback) continue;
    n.pullback(*this, n.grad);
  }
}

Vector Tape::gradient(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Vector(n.value.size(), 0.0);
  return n.grad;
}

std::vector<Vector> Tape::parameter_gradients() const {
  std::vector<Vector> out;
  out.reserve(params_.size());
  for (std::size_t id : params_) out.push_back(gradient(Var(const_cast<Tape*>(this), id)));
  return out;
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw TapeError("use of an unbound variable");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape() || !a.valid()) throw TapeError("operands live on different tapes");
  return *a.tape();
}

std::size_t broadcast_size(const Vector& a, const Vector& b) {
  if (a.size() == b.size()) return a.size();
  if (a.size() == 1) return b.size();
  if (b.size() == 1) return a.size();
  throw DimensionError("elementwise op: incompatible sizes " + std::to_string(a.size()) + " and " +
                       std::to_string(b.size()));
}

inline double at(const Vector& v, std::size_t i) { return v.size() == 1 ? v[0] : v[i]; }

// Sends an elementwise adjoint back to an operand that may have been broadcast.
void send(Tape& t, Var target, std::span<const double> g) {
  if (target.size() == g.size()) {
    t.accumulate(target, g);
  } else {
    double s = 0.0;
    for (double x : g) s += x;
    t.accumulate(target, 0, s);
  }
}

template <class F, class DF>
Var unary(Var a, F f, DF df) {
  Tape& t = tape_of(a);
  const Vector& x = a.value();
  Vector y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), f);
  return t.record(std::move(y), {a}, [a, df](Tape& tp, std::span<const double> g) {
    const Vector& xv = tp.value(a.id());
    Vector out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] * df(xv[i]);
    tp.accumulate(a, out);
  });
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double sinhc_derivative(double x) {
  if (std::abs(x) < 1e-4) return x / 3.0 + x * x * x / 30.0;
  return (x * std::cosh(x) - std::sinh(x)) / (x * x);
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Vector &x = a.value(), &y = b.value();
  Vector out(broadcast_size(x, y));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(x, i) + at(y, i);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    send(tp, a, g);
    send(tp, b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Vector &x = a.value(), &y = b.value();
  Vector out(broadcast_size(x, y));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(x, i) - at(y, i);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    send(tp, a, g);
    Vector ng(g.begin(), g.end());
    for (double& v : ng) v = -v;
    send(tp, b, ng);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Vector &x = a.value(), &y = b.value();
  Vector out(broadcast_size(x, y));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(x, i) * at(y, i);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    const Vector &xv = tp.value(a.id()), &yv = tp.value(b.id());
    Vector ga(g.size()), gb(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * at(yv, i);
      gb[i] = g[i] * at(xv, i);
    }
    send(tp, a, ga);
    send(tp, b, gb);
  });
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Vector &x = a.value(), &y = b.value();
  Vector out(broadcast_size(x, y));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(x, i) / at(y, i);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    const Vector &xv = tp.value(a.id()), &yv = tp.value(b.id());
    Vector ga(g.size()), gb(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double yi = at(yv, i);
      ga[i] = g[i] / yi;
      gb[i] = -g[i] * at(xv, i) / (yi * yi);
    }
    send(tp, a, ga);
    send(tp, b, gb);
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value()) s += v;
  return t.record({s}, {a}, [a](Tape& tp, std::span<const double> g) {
    tp.accumulate(a, Vector(a.size(), g[0]));
  });
}

Var dot(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Vector &x = a.value(), &y = b.value();
  if (x.size() != y.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return t.record({s}, {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    const Vector &xv = tp.value(a.id()), &yv = tp.value(b.id());
    Vector ga(xv.size()), gb(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      ga[i] = g[0] * yv[i];
      gb[i] = g[0] * xv[i];
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var squared_norm(Var a) { return dot(a, a); }

Var euclidean_norm(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value()) s += v * v;
  const double n = std::sqrt(s);
  return t.record({n}, {a}, [a, n](Tape& tp, std::span<const double> g) {
    if (n == 0.0) return;  // subgradient 0 at the origin
    Vector out(tp.value(a.id()));
    for (double& v : out) v *= g[0] / n;
    tp.accumulate(a, out);
  });
}

Var matvec(Var matrix, std::size_t rows, std::size_t cols, Var x) {
  Tape& t = tape_of(matrix, x);
  const Vector &m = matrix.value(), &xv = x.value();
  if (m.size() != rows * cols || xv.size() != cols) throw DimensionError("matvec: shape mismatch");
  Vector out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * cols;
    double s = 0.0;
    for (std::size_t k = 0; k < cols; ++k) s += row[k] * xv[k];
    out[r] = s;
  }
  return t.record(std::move(out), {matrix, x}, [matrix, x, rows, cols](Tape& tp, std::span<const double> g) {
    const Vector &mv = tp.value(matrix.id()), &in = tp.value(x.id());
    if (tp.requires_grad(matrix)) {
      Vector gm(rows * cols);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < cols; ++k) gm[r * cols + k] = g[r] * in[k];
      tp.accumulate(matrix, gm);
    }
    if (tp.requires_grad(x)) {
      Vector gx(cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < cols; ++k) gx[k] += g[r] * mv[r * cols + k];
      tp.accumulate(x, gx);
    }
  });
}

Var matvec(Var matrix, std::size_t rows, std::size_t cols, std::span<const double> x) {
  Tape& t = tape_of(matrix);
  const Vector& m = matrix.value();
  if (m.size() != rows * cols || x.size() != cols) throw DimensionError("matvec: shape mismatch");
  Vector out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * cols;
    double s = 0.0;
    for (std::size_t k = 0; k < cols; ++k) s += row[k] * x[k];
    out[r] = s;
  }
  return t.record(std::move(out), {matrix}, [matrix, x, rows, cols](Tape& tp, std::span<const double> g) {
    Vector* gm = tp.adjoint(matrix);
    for (std::size_t r = 0; r < rows; ++r) {
      double* row = gm->data() + r * cols;
      for (std::size_t k = 0; k < cols; ++k) row[k] += g[r] * x[k];
    }
  });
}

Var concat(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Vector out = a.value();
  const Vector& y = b.value();
  out.insert(out.end(), y.begin(), y.end());
  const std::size_t na = a.size();
  return t.record(std::move(out), {a, b}, [a, b, na](Tape& tp, std::span<const double> g) {
    tp.accumulate(a, g.subspan(0, na));
    tp.accumulate(b, g.subspan(na));
  });
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  Tape& t = tape_of(a);
  const Vector& x = a.value();
  if (offset + length > x.size()) throw DimensionError("slice: out of range");
  Vector out(x.begin() + offset, x.begin() + offset + length);
  return t.record(std::move(out), {a}, [a, offset](Tape& tp, std::span<const double> g) {
    Vector full(a.size(), 0.0);
    std::copy(g.begin(), g.end(), full.begin() + offset);
    tp.accumulate(a, full);
  });
}

Var element(Var a, std::size_t index) { return slice(a, index, 1); }

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::abs(x); }, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var cosh(Var a) {
  return unary(a, [](double x) { return std::cosh(x); }, [](double x) { return std::sinh(x); });
}

Var sinh(Var a) {
  return unary(a, [](double x) { return std::sinh(x); }, [](double x) { return std::cosh(x); });
}

Var asinh(Var a) {
  return unary(a, [](double x) { return std::asinh(x); }, [](double x) { return 1.0 / std::sqrt(1.0 + x * x); });
}

Var sinhc(Var a) {
  return unary(a, [](double x) { return hypad::sinhc(x); }, sinhc_derivative);
}

Var softplus(Var a) { return unary(a, softplus_value, sigmoid_value); }

Var sigmoid(Var a) {
  return unary(a, sigmoid_value, [](double x) {
    const double s = sigmoid_value(x);
    return s * (1.0 - s);
  });
}

Var sign(Var a) {
  Tape& t = tape_of(a);
  Vector out(a.value());
  for (double& v : out) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return t.constant(std::move(out));
}

Var lorentz_inner(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const double value = hypad::lorentz_inner(a.value(), b.value());
  return t.record({value}, {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    const Vector &xv = tp.value(a.id()), &yv = tp.value(b.id());
    Vector ga(xv.size()), gb(xv.size());
    ga[0] = -g[0] * yv[0];
    gb[0] = -g[0] * xv[0];
    for (std::size_t i = 1; i < xv.size(); ++i) {
      ga[i] = g[0] * yv[i];
      gb[i] = g[0] * xv[i];
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var guarded_sqrt_abs(Var x) { return sqrt(add_scalar(abs(x), kNormEpsilon)); }

Var lorentz_norm(Var v) { return guarded_sqrt_abs(lorentz_inner(v, v)); }

Var curvature(Var log_c) { return exp(log_c); }

Var sqrt_curvature(Var log_c) { return exp(scale(log_c, 0.5)); }

Var expmap_origin(Var v_space, Var log_c) {
  Tape& t = tape_of(v_space, log_c);
  const Var sqrt_c = sqrt_curvature(log_c);
  // Tangent vectors at the origin have zero time component, so |v|_L is the
  // Euclidean norm of the space part.
  const Var tangent = concat(t.constant(0.0), v_space);
  const Var arg = mul(sqrt_c, lorentz_norm(tangent));
  const Var time = div(cosh(arg), sqrt_c);
  const Var space = mul(sinhc(arg), v_space);
  return concat(time, space);
}

Var hyperbolic_linear(Var matrix, std::size_t rows, std::size_t cols, Var z, Var log_c) {
  tape_of(matrix, z);
  if (z.size() != cols + 1) throw DimensionError("hyperbolic_linear: input dimension mismatch");
  const Var space = matvec(matrix, rows, cols, slice(z, 1, cols));
  const Var inv_c = exp(neg(log_c));
  const Var time = sqrt(add(squared_norm(space), inv_c));
  return concat(time, space);
}

Var poincare_radius(Var z, Var log_c) {
  const Var space = slice(z, 1, z.size() - 1);
  const Var inv_sqrt_c = exp(scale(log_c, -0.5));
  const Var denom = add(element(z, 0), inv_sqrt_c);
  return div(euclidean_norm(space), denom);
}

Var lorentzian_centroid(std::span<const Var> points, std::span<const Var> weights, Var log_c) {
  if (points.empty() || points.size() != weights.size()) {
    throw DimensionError("lorentzian_centroid: need one weight per point");
  }
  Var total = mul(weights[0], points[0]);
  for (std::size_t l = 1; l < points.size(); ++l) total = add(total, mul(weights[l], points[l]));
  const Var denom = mul(sqrt_curvature(log_c), lorentz_norm(total));
  return div(total, denom);
}

Var hyperplane_logit(Var z, Var w, Var log_c) {
  const Var inner = lorentz_inner(w, z);
  const Var w_norm = lorentz_norm(w);
  const Var sqrt_c = sqrt_curvature(log_c);
  const Var distance = div(abs(asinh(div(mul(sqrt_c, inner), w_norm))), sqrt_c);
  return mul(mul(sign(inner), w_norm), distance);
}

}  // namespace hypad::ad
