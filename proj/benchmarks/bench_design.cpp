#include <benchmark/benchmark.h>

#include <nlwg/ad.hpp>
#include <nlwg/design.hpp>
#include <nlwg/stack.hpp>
#include <nlwg/surrogate.hpp>

#include <vector>

using namespace nlwg;

namespace {

EpitaxialStack bench_stack() {
  EpitaxialStack s;
  s.groups = {
      {LayerRole::substrate, 1, {{0.0, 0.0}}},
      {LayerRole::bragg_bottom, 48, {{48.4, 0.90}, {58.6, 0.60}}},
      {LayerRole::buffer, 1, {{120.7, 0.90}}},
      {LayerRole::core, 4, {{91.7, 0.50}, {96.4, 0.80}}},
      {LayerRole::buffer, 1, {{120.7, 0.90}}},
      {LayerRole::bragg_top, 36, {{58.6, 0.60}, {48.4, 0.90}}},
      {LayerRole::air, 1, {{0.0, 0.0}}},
  };
  return s;
}

struct Fixture {
  DesignProblem pb;
  SurrogateModel te, tm;
  std::vector<double> x0;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const EpitaxialStack tmpl = bench_stack();
    GeneratorConfig gen;
    gen.input_len = 512;
    gen.grid_headroom = 1.35;
    gen.profile.grid_dx_nm = 4.0;
    const DesignSpace space = DesignSpace::create(tmpl, BoundsConfig{0.45, 0.95, 20.0, 250.0});
    DesignProblem pb = DesignProblem::create(space, gen);
    // untrained weights cost the same as trained ones
    SurrogateModel te = make_surrogate(Polarization::te, 512, std::vector<int>{192, 192}, 11);
    SurrogateModel tm = make_surrogate(Polarization::tm, 512, std::vector<int>{192, 192}, 12);
    te.lambda_nm = pb.lambda_te_nm;
    tm.lambda_nm = pb.lambda_tm_nm;
    std::vector<double> x0 = space.encode(tmpl);
    return Fixture{std::move(pb), std::move(te), std::move(tm), std::move(x0)};
  }();
  return f;
}

void bm_surrogate_predict(benchmark::State& state) {
  const Fixture& f = fixture();
  auto p = build_index_profile(bench_stack(), f.pb.lambda_te_nm, 4.0, 5.0);
  for (auto _ : state) {
    auto q = predict_profile(f.te, p);
    benchmark::DoNotOptimize(q.n_eff);
  }
}
BENCHMARK(bm_surrogate_predict);

void bm_surrogate_fom_value(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) {
    auto ev = evaluate_surrogate_fom<double>(f.pb, f.te, f.tm, f.x0);
    benchmark::DoNotOptimize(ev.fom.gamma_abs);
  }
}
BENCHMARK(bm_surrogate_fom_value);

// one optimizer step's worth of differentiation: forward tape + reverse sweep
void bm_surrogate_fom_gradient(benchmark::State& state) {
  const Fixture& f = fixture();
  auto fn = ad::make_function([&](auto v) {
    using T = std::remove_cvref_t<decltype(v[0])>;
    return evaluate_surrogate_fom<T>(f.pb, f.te, f.tm, std::span<const T>(v)).fom.gamma_abs;
  });
  for (auto _ : state) {
    auto g = ad::evaluate_with_gradient(fn, f.x0);
    benchmark::DoNotOptimize(g.gradient.data());
  }
  state.counters["dims"] = static_cast<double>(f.x0.size());
}
BENCHMARK(bm_surrogate_fom_gradient);

// ground-truth counterpart that the surrogate amortizes
void bm_reference_fom(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) {
    auto ev = evaluate_reference_fom(f.pb, f.x0);
    benchmark::DoNotOptimize(ev.fom.gamma_abs);
  }
}
BENCHMARK(bm_reference_fom);

}  // namespace
