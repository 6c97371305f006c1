#pragma once

// Reverse-mode automatic differentiation on a scalar tape.
//
// Every computation on the design path (profile build -> surrogate forward ->
// pump transfer matrices -> overlap integral) is written as a template over a
// scalar type T and instantiated twice: T = double for plain evaluation and
// T = ad::Var for gradient evaluation. A Var performs exactly the same double
// arithmetic as the plain path (values match bit for bit) while recording the
// local partial derivatives on a tape; one reverse sweep then yields the exact
// gradient with respect to every input at a small constant multiple of the
// forward cost, independent of the parameter count.
//
// Complex quantities are handled by cplx.hpp as explicit (re, im) pairs of T,
// i.e. real and imaginary parts are differentiated as independent reals.
//
// Thread model: one active tape per thread (ScopedTape). Evaluations for
// different designs may run concurrently on different threads; one tape is
// never shared.

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nlwg/errors.hpp"

namespace nlwg::ad {

class Tape {
 public:
  static constexpr std::int32_t kNone = -1;
  static constexpr std::int32_t kWide = -2;

  struct Node {
    std::int32_t pa, pb;  // parent ids; pa == kWide -> pb indexes wide_meta_
    double wa, wb;        // local partials d(node)/d(parent)
  };

  std::int32_t leaf() { return push(kNone, kNone, 0.0, 0.0); }
  std::int32_t unary(std::int32_t a, double wa) { return push(a, kNone, wa, 0.0); }
  std::int32_t binary(std::int32_t a, double wa, std::int32_t b, double wb) {
    return push(a, b, wa, wb);
  }

  // Fused linear combination: one node with n parents, partials w[i].
  std::int32_t fused(const std::int32_t* ids, const double* w, std::size_t n) {
    const auto offset = static_cast<std::uint32_t>(wide_ids_.size());
    wide_ids_.insert(wide_ids_.end(), ids, ids + n);
    wide_w_.insert(wide_w_.end(), w, w + n);
    wide_meta_.push_back({offset, static_cast<std::uint32_t>(n)});
    return push(kWide, static_cast<std::int32_t>(wide_meta_.size() - 1), 0.0, 0.0);
  }
  std::int32_t fused_uniform(const std::int32_t* ids, std::size_t n, double w) {
    const auto offset = static_cast<std::uint32_t>(wide_ids_.size());
    wide_ids_.insert(wide_ids_.end(), ids, ids + n);
    wide_w_.insert(wide_w_.end(), n, w);
    wide_meta_.push_back({offset, static_cast<std::uint32_t>(n)});
    return push(kWide, static_cast<std::int32_t>(wide_meta_.size() - 1), 0.0, 0.0);
  }

  // Adjoints of every node reachable from root (others zero).
  std::vector<double> gradient(std::int32_t root) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() {
    nodes_.clear();
    wide_ids_.clear();
    wide_w_.clear();
    wide_meta_.clear();
  }
  void reserve(std::size_t nodes, std::size_t wide_entries) {
    nodes_.reserve(nodes);
    wide_ids_.reserve(wide_entries);
    wide_w_.reserve(wide_entries);
  }

 private:
  struct WideMeta {
    std::uint32_t offset, count;
  };

  std::int32_t push(std::int32_t pa, std::int32_t pb, double wa, double wb) {
    nodes_.push_back({pa, pb, wa, wb});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<std::int32_t> wide_ids_;
  std::vector<double> wide_w_;
  std::vector<WideMeta> wide_meta_;

  friend std::vector<double> tape_gradient(const Tape&, std::int32_t);
};

// Active tape for the current thread; Var arithmetic records onto it.
Tape* active_tape();

class ScopedTape {
 public:
  explicit ScopedTape(Tape& tape);
  ~ScopedTape();
  ScopedTape(const ScopedTape&) = delete;
  ScopedTape& operator=(const ScopedTape&) = delete;

 private:
  Tape* prev_;
};

namespace detail {
Tape& require_tape();
}

struct Var {
  double v = 0.0;
  std::int32_t i = Tape::kNone;

  Var() = default;
  Var(double value)  // records a constant (zero-gradient) node
      : v(value), i(detail::require_tape().leaf()) {}
  Var(double value, std::int32_t id) : v(value), i(id) {}

  static Var input(double value) { return Var(value, detail::require_tape().leaf()); }
};

inline double val(double x) { return x; }
inline double val(const Var& x) { return x.v; }

// --- arithmetic -------------------------------------------------------------

inline Var operator+(const Var& a, const Var& b) {
  return {a.v + b.v, detail::require_tape().binary(a.i, 1.0, b.i, 1.0)};
}
inline Var operator+(const Var& a, double c) { return {a.v + c, a.i}; }  // alias: d/da == 1
inline Var operator+(double c, const Var& a) { return {c + a.v, a.i}; }
inline Var operator-(const Var& a, const Var& b) {
  return {a.v - b.v, detail::require_tape().binary(a.i, 1.0, b.i, -1.0)};
}
inline Var operator-(const Var& a, double c) { return {a.v - c, a.i}; }
inline Var operator-(double c, const Var& a) {
  return {c - a.v, detail::require_tape().unary(a.i, -1.0)};
}
inline Var operator-(const Var& a) { return {-a.v, detail::require_tape().unary(a.i, -1.0)}; }
inline Var operator*(const Var& a, const Var& b) {
  return {a.v * b.v, detail::require_tape().binary(a.i, b.v, b.i, a.v)};
}
inline Var operator*(const Var& a, double c) { return {a.v * c, detail::require_tape().unary(a.i, c)}; }
inline Var operator*(double c, const Var& a) { return {c * a.v, detail::require_tape().unary(a.i, c)}; }
inline Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.v;
  return {a.v / b.v, detail::require_tape().binary(a.i, inv, b.i, -a.v * inv * inv)};
}
inline Var operator/(const Var& a, double c) {
  return {a.v / c, detail::require_tape().unary(a.i, 1.0 / c)};
}
inline Var operator/(double c, const Var& b) {
  const double inv = 1.0 / b.v;
  return {c * inv, detail::require_tape().unary(b.i, -c * inv * inv)};
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator+=(Var& a, double c) { return a = a + c; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator*=(Var& a, double c) { return a = a * c; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }
inline Var& operator/=(Var& a, double c) { return a = a / c; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator<(const Var& a, double b) { return a.v < b; }
inline bool operator<(double a, const Var& b) { return a < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator>(const Var& a, double b) { return a.v > b; }
inline bool operator>(double a, const Var& b) { return a > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }

// --- transcendentals --------------------------------------------------------

inline Var exp(const Var& a) {
  const double e = std::exp(a.v);
  return {e, detail::require_tape().unary(a.i, e)};
}
inline Var log(const Var& a) { return {std::log(a.v), detail::require_tape().unary(a.i, 1.0 / a.v)}; }
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.v);
  return {s, detail::require_tape().unary(a.i, 0.5 / s)};
}
// Both scalar paths funnel through one libm entry point. A lone sin() call
// and a compiler-fused sincos() can disagree in the last bit, which would
// break the value-parity guarantee between taped and plain evaluations.
inline std::pair<double, double> sin_cos(double a) {
#if defined(__GLIBC__)
  double s, c;
  ::sincos(a, &s, &c);
  return {s, c};
#else
  return {std::sin(a), std::cos(a)};
#endif
}
inline std::pair<Var, Var> sin_cos(const Var& a) {
  const auto [s, c] = sin_cos(a.v);
  auto& tape = detail::require_tape();
  return {Var{s, tape.unary(a.i, c)}, Var{c, tape.unary(a.i, -s)}};
}
inline Var sin(const Var& a) {
  const auto [s, c] = sin_cos(a.v);
  return {s, detail::require_tape().unary(a.i, c)};
}
inline Var cos(const Var& a) {
  const auto [s, c] = sin_cos(a.v);
  return {c, detail::require_tape().unary(a.i, -s)};
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.v);
  return {t, detail::require_tape().unary(a.i, 1.0 - t * t)};
}
inline Var asin(const Var& a) {
  return {std::asin(a.v), detail::require_tape().unary(a.i, 1.0 / std::sqrt(1.0 - a.v * a.v))};
}
inline Var abs(const Var& a) {
  const double s = a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0);
  return {std::abs(a.v), detail::require_tape().unary(a.i, s)};
}
inline Var fabs(const Var& a) { return abs(a); }
inline Var pow(const Var& a, double p) {
  return {std::pow(a.v, p), detail::require_tape().unary(a.i, p * std::pow(a.v, p - 1.0))};
}
inline Var sq(const Var& a) { return {a.v * a.v, detail::require_tape().unary(a.i, 2.0 * a.v)}; }
inline double sq(double a) { return a * a; }

// Deliberately rejected primitives: piecewise-constant, no usable derivative.
inline Var floor(const Var&) { throw CompositionError("floor"); }
inline Var ceil(const Var&) { throw CompositionError("ceil"); }
inline Var round(const Var&) { throw CompositionError("round"); }
inline Var fmod(const Var&, const Var&) { throw CompositionError("fmod"); }

// --- fused linear ops (identical accumulation order in both instantiations) --

inline double affine(double bias, std::span<const double> w, std::span<const double> x) {
  double acc = bias;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * x[k];
  return acc;
}
Var affine(double bias, std::span<const double> w, std::span<const Var> x);

inline double lincomb(std::span<const double> w, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * x[k];
  return acc;
}
Var lincomb(std::span<const double> w, std::span<const Var> x);

inline double sum_scaled(std::span<const double> x, double s) {
  double acc = 0.0;
  for (double xi : x) acc += xi;
  return acc * s;
}
Var sum_scaled(std::span<const Var> x, double s);

// --- gradient-evaluation interface -------------------------------------------

// A computation evaluable both as plain doubles and on the tape. Adapters over
// a single generic callable keep the two instantiations the same code.
struct DesignFunction {
  virtual ~DesignFunction() = default;
  virtual double value(std::span<const double> v) const = 0;
  virtual Var value_ad(std::span<const Var> v) const = 0;
};

template <class F>
class FunctionAdapter final : public DesignFunction {
 public:
  explicit FunctionAdapter(F f) : f_(std::move(f)) {}
  double value(std::span<const double> v) const override { return f_(v); }
  Var value_ad(std::span<const Var> v) const override { return f_(v); }

 private:
  F f_;
};

template <class F>
FunctionAdapter<F> make_function(F f) {
  return FunctionAdapter<F>(std::move(f));
}

struct DifferentiableScalar {
  double value = 0.0;
  std::vector<double> gradient;  // aligned with the input vector
};

// Value identical to f.value(v); gradient exact (reverse sweep).
DifferentiableScalar evaluate_with_gradient(const DesignFunction& f, std::span<const double> v);

struct FiniteDifferenceReport {
  std::vector<double> grad_ad, grad_fd, rel_err;
  double max_rel_err = 0.0;
  std::size_t argmax = 0;
  double step = 0.0;
  // Set when the discrepancy at `step` exceeds the tolerance but shrinks by
  // >= 4x at step/16: truncation-dominated, i.e. the step was too large.
  bool step_sensitive = false;
};

// Central differences with per-parameter step rel_step * max(1, |v_i|).
FiniteDifferenceReport finite_difference_check(const DesignFunction& f, std::span<const double> v,
                                               double rel_step = 1e-6, double tolerance = 1e-4);

}  // namespace nlwg::ad

namespace nlwg {
using ad::val;  // value extraction usable on both scalar types
using ad::sq;
}  // namespace nlwg
