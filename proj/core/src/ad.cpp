#include "nlwg/ad.hpp"

#include <cmath>
#include <cstdlib>

namespace nlwg::ad {

namespace {
thread_local Tape* g_active = nullptr;
}

Tape* active_tape() { return g_active; }

ScopedTape::ScopedTape(Tape& tape) : prev_(g_active) { g_active = &tape; }
ScopedTape::~ScopedTape() { g_active = prev_; }

Tape& detail::require_tape() {
  if (g_active == nullptr)
    throw Error("differentiable arithmetic used outside a ScopedTape scope");
  return *g_active;
}

std::vector<double> Tape::gradient(std::int32_t root) const {
  std::vector<double> adj(nodes_.size(), 0.0);
  if (root < 0 || root >= static_cast<std::int32_t>(nodes_.size()))
    throw Error("gradient root is not a node on this tape");
  adj[static_cast<std::size_t>(root)] = 1.0;
  for (std::int32_t i = root; i >= 0; --i) {
    const double a = adj[static_cast<std::size_t>(i)];
    if (a == 0.0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.pa == kWide) {
      const WideMeta& m = wide_meta_[static_cast<std::size_t>(n.pb)];
      const std::int32_t* ids = wide_ids_.data() + m.offset;
      const double* w = wide_w_.data() + m.offset;
      for (std::uint32_t k = 0; k < m.count; ++k)
        if (ids[k] >= 0) adj[static_cast<std::size_t>(ids[k])] += a * w[k];
      continue;
    }
    if (n.pa >= 0) adj[static_cast<std::size_t>(n.pa)] += a * n.wa;
    if (n.pb >= 0) adj[static_cast<std::size_t>(n.pb)] += a * n.wb;
  }
  return adj;
}

Var affine(double bias, std::span<const double> w, std::span<const Var> x) {
  double acc = bias;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * x[k].v;
  Tape& t = detail::require_tape();
  // parent ids gathered into a scratch block; tape copies them out
  static thread_local std::vector<std::int32_t> ids;
  ids.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) ids[k] = x[k].i;
  return {acc, t.fused(ids.data(), w.data(), x.size())};
}

Var lincomb(std::span<const double> w, std::span<const Var> x) {
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * x[k].v;
  Tape& t = detail::require_tape();
  static thread_local std::vector<std::int32_t> ids;
  ids.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) ids[k] = x[k].i;
  return {acc, t.fused(ids.data(), w.data(), x.size())};
}

Var sum_scaled(std::span<const Var> x, double s) {
  double acc = 0.0;
  for (const Var& xi : x) acc += xi.v;
  Tape& t = detail::require_tape();
  static thread_local std::vector<std::int32_t> ids;
  ids.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) ids[k] = x[k].i;
  return {acc * s, t.fused_uniform(ids.data(), x.size(), s)};
}

DifferentiableScalar evaluate_with_gradient(const DesignFunction& f, std::span<const double> v) {
  Tape tape;
  tape.reserve(1u << 20, 1u << 18);
  ScopedTape scope(tape);
  std::vector<Var> inputs;
  inputs.reserve(v.size());
  for (double x : v) inputs.push_back(Var::input(x));
  const Var out = f.value_ad(inputs);
  const std::vector<double> adj = tape.gradient(out.i);
  DifferentiableScalar r;
  r.value = out.v;
  r.gradient.resize(v.size());
  for (std::size_t k = 0; k < v.size(); ++k)
    r.gradient[k] = adj[static_cast<std::size_t>(inputs[k].i)];
  return r;
}

namespace {

std::vector<double> central_fd(const DesignFunction& f, std::span<const double> v,
                               double rel_step) {
  std::vector<double> g(v.size(), 0.0), probe(v.begin(), v.end());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double h = rel_step * std::max(1.0, std::abs(v[k]));
    const double keep = probe[k];
    probe[k] = keep + h;
    const double fp = f.value(probe);
    probe[k] = keep - h;
    const double fm = f.value(probe);
    probe[k] = keep;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_error(double a, double b, double scale) {
  const double d = std::abs(a - b);
  return d / std::max({std::abs(a), std::abs(b), scale});
}

}  // namespace

FiniteDifferenceReport finite_difference_check(const DesignFunction& f, std::span<const double> v,
                                               double rel_step, double tolerance) {
  FiniteDifferenceReport rep;
  rep.step = rel_step;
  rep.grad_ad = evaluate_with_gradient(f, v).gradient;
  rep.grad_fd = central_fd(f, v, rel_step);

  double gmax = 0.0;
  for (double g : rep.grad_ad) gmax = std::max(gmax, std::abs(g));
  const double scale = 1e-10 * std::max(1.0, gmax);  // floor so ~zero entries compare cleanly

  rep.rel_err.resize(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    rep.rel_err[k] = relative_error(rep.grad_ad[k], rep.grad_fd[k], scale);
    if (rep.rel_err[k] > rep.max_rel_err) {
      rep.max_rel_err = rep.rel_err[k];
      rep.argmax = k;
    }
  }

  if (rep.max_rel_err > tolerance) {
    const std::vector<double> fd2 = central_fd(f, v, rel_step / 16.0);
    double worst2 = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k)
      worst2 = std::max(worst2, relative_error(rep.grad_ad[k], fd2[k], scale));
    rep.step_sensitive = worst2 < 0.25 * rep.max_rel_err;
  }
  return rep;
}

}  // namespace nlwg::ad
