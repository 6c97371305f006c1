#include "doctest.h"

#include <nlwg/ad.hpp>
#include <nlwg/cplx.hpp>
#include <nlwg/errors.hpp>
#include <nlwg/rng.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace nlwg;
using ad::Var;

namespace {

template <class T>
T poly_mix(std::span<const T> v) {
  using std::exp;
  using std::log;
  using std::sin;
  using std::sqrt;
  using std::tanh;
  T a = v[0] * v[1] + sin(v[2]);
  T b = exp(v[0] * 0.3) / (v[1] * v[1] + 1.7);
  T c = sqrt(v[2] * v[2] + 0.25) * tanh(v[3]);
  T d = log(v[3] * v[3] + 2.0) - v[0] / (v[2] + 4.0);
  return a * b + c * d + (a - c) * (b + d);
}

}  // namespace

TEST_CASE("gradient of v0^2 at 3") {
  auto f = ad::make_function([](auto v) { return v[0] * v[0]; });
  auto r = ad::evaluate_with_gradient(f, std::vector<double>{3.0, 5.0});
  CHECK(r.value == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(r.gradient[0] == doctest::Approx(6.0).epsilon(1e-14));
  CHECK(r.gradient[1] == 0.0);
}

TEST_CASE("constant function has zero gradient") {
  auto f = ad::make_function([](auto v) {
    using T = typename decltype(v)::value_type;
    (void)v;
    return T(4.25);
  });
  auto r = ad::evaluate_with_gradient(f, std::vector<double>{1.0, 2.0, 3.0});
  CHECK(r.value == 4.25);
  for (double g : r.gradient) CHECK(g == 0.0);
}

TEST_CASE("value path is bit-identical to plain double evaluation") {
  std::vector<double> v{0.7, -1.3, 2.1, 0.4};
  auto f = ad::make_function([](auto x) { return poly_mix(x); });
  auto r = ad::evaluate_with_gradient(f, v);
  double plain = poly_mix(std::span<const double>(v));
  CHECK(r.value == plain);  // exact: identical operation order on both paths
}

TEST_CASE("composite gradients agree with central differences") {
  auto f = ad::make_function([](auto x) { return poly_mix(x); });
  auto eng = make_engine(derive_seed(20260815, 1));
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v{u(eng), u(eng), u(eng) + 2.0, u(eng)};
    auto rep = ad::finite_difference_check(f, v);
    CAPTURE(trial);
    CAPTURE(rep.argmax);
    CHECK(rep.max_rel_err < 1e-6);
  }
}

TEST_CASE("linear functions differentiate to machine precision") {
  auto f = ad::make_function([](auto x) {
    return x[0] * 2.0 - x[1] * 7.5 + x[2] * 0.125 + 3.0;
  });
  auto rep = ad::finite_difference_check(f, std::vector<double>{1.0, 2.0, 3.0});
  CHECK(rep.max_rel_err < 1e-7);  // pure roundoff; no truncation term
  CHECK(rep.grad_ad[0] == 2.0);
  CHECK(rep.grad_ad[1] == -7.5);
  CHECK(rep.grad_ad[2] == 0.125);
}

TEST_CASE("evaluation is deterministic across repeated runs") {
  auto f = ad::make_function([](auto x) { return poly_mix(x); });
  std::vector<double> v{0.3, 1.1, -0.8, 2.2};
  auto r1 = ad::evaluate_with_gradient(f, v);
  auto r2 = ad::evaluate_with_gradient(f, v);
  CHECK(r1.value == r2.value);
  for (std::size_t k = 0; k < v.size(); ++k) CHECK(r1.gradient[k] == r2.gradient[k]);
}

TEST_CASE("finite difference report flags truncation-dominated steps") {
  using std::sin;
  auto f = ad::make_function([](auto x) {
    using std::sin;
    using ad::sin;
    return sin(x[0] * 10.0);
  });
  auto rep = ad::finite_difference_check(f, std::vector<double>{3.0}, 0.25, 1e-4);
  CHECK(rep.max_rel_err > 1e-4);
  CHECK(rep.step_sensitive);
}

TEST_CASE("fused accumulators match plain double folds exactly") {
  std::vector<double> w{0.5, -1.25, 2.0, 0.75, -0.375};
  std::vector<double> xs{1.1, 2.2, 3.3, 4.4, 5.5};

  double plain_aff = ad::affine(0.25, std::span<const double>(w), std::span<const double>(xs));

  ad::Tape tape;
  ad::ScopedTape scope(tape);
  std::vector<Var> xv;
  for (double x : xs) xv.push_back(Var::input(x));
  Var fused = ad::affine(0.25, std::span<const double>(w), std::span<const Var>(xv));
  CHECK(fused.v == plain_aff);

  auto adj = tape.gradient(fused.i);
  for (std::size_t k = 0; k < xs.size(); ++k) CHECK(adj[xv[k].i] == w[k]);

  Var total = ad::sum_scaled(std::span<const Var>(xv), 0.5);
  double plain_total = ad::sum_scaled(std::span<const double>(xs), 0.5);
  CHECK(total.v == plain_total);
  auto adj2 = tape.gradient(total.i);
  for (std::size_t k = 0; k < xs.size(); ++k) CHECK(adj2[xv[k].i] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("lincomb matches the double fold and exposes the weights") {
  std::vector<double> w{3.0, -4.0, 0.5};
  std::vector<double> xs{1.0, 2.0, 8.0};
  double plain = ad::lincomb(std::span<const double>(w), std::span<const double>(xs));

  ad::Tape tape;
  ad::ScopedTape scope(tape);
  std::vector<Var> xv;
  for (double x : xs) xv.push_back(Var::input(x));
  Var dot = ad::lincomb(std::span<const double>(w), std::span<const Var>(xv));
  CHECK(dot.v == plain);
  auto adj = tape.gradient(dot.i);
  for (std::size_t k = 0; k < xs.size(); ++k) CHECK(adj[xv[k].i] == w[k]);
}

TEST_CASE("non-differentiable primitives are rejected") {
  ad::Tape tape;
  ad::ScopedTape scope(tape);
  Var x = Var::input(2.5);
  CHECK_THROWS_AS((void)ad::floor(x), CompositionError);
  CHECK_THROWS_AS((void)ad::ceil(x), CompositionError);
  CHECK_THROWS_AS((void)ad::round(x), CompositionError);
  CHECK_THROWS_AS((void)ad::fmod(x, 1.0), CompositionError);
  try {
    (void)ad::floor(x);
  } catch (const CompositionError& e) {
    CHECK(std::string(e.what()).find("floor") != std::string::npos);
  }
}

TEST_CASE("active arithmetic outside a tape scope is an error") {
  Var x;  // default: constant zero, no tape
  x.v = 1.0;
  CHECK_THROWS_AS((void)ad::exp(x), Error);
}

TEST_CASE("complex helper differentiates through magnitude") {
  auto f = ad::make_function([](auto v) {
    using T = typename decltype(v)::value_type;
    Cx<T> z{v[0], v[1]};
    Cx<T> w = z * z + Cx<T>(T(0.5));
    return nlwg::abs(w);
  });
  auto rep = ad::finite_difference_check(f, std::vector<double>{0.8, -0.6});
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("square root of signed reals follows the upper half plane") {
  ad::Tape tape;
  ad::ScopedTape scope(tape);
  Var pos = Var::input(4.0);
  auto zp = sqrt_real_to_cx(pos);
  CHECK(ad::val(zp.re) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(ad::val(zp.im) == 0.0);
  Var neg = Var::input(-9.0);
  auto zn = sqrt_real_to_cx(neg);
  CHECK(ad::val(zn.re) == 0.0);
  CHECK(ad::val(zn.im) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("seed derivation decorrelates stream indices") {
  auto s0 = derive_seed(42, 0);
  auto s1 = derive_seed(42, 1);
  auto t0 = derive_seed(43, 0);
  CHECK(s0 != s1);
  CHECK(s0 != t0);
  auto e1 = make_engine(s0);
  auto e2 = make_engine(s0);
  CHECK(e1() == e2());
}
