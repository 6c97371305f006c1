#include <benchmark/benchmark.h>

#include <nlwg/ad.hpp>
#include <nlwg/profile.hpp>
#include <nlwg/stack.hpp>

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

void bm_index_profile_plain(benchmark::State& state) {
  auto s = bench_stack();
  for (auto _ : state) {
    auto p = build_index_profile(s, 1092.0, 1.0, 5.0);
    benchmark::DoNotOptimize(p.n.data());
  }
}
BENCHMARK(bm_index_profile_plain);

void bm_index_profile_taped(benchmark::State& state) {
  auto s = bench_stack();
  auto flat = flatten(s);
  ProfileConfig cfg;
  Grid grid = make_grid(total_thickness(s), cfg);
  ad::Tape tape;
  tape.reserve(1 << 20, 1 << 16);
  for (auto _ : state) {
    tape.clear();
    ad::ScopedTape scope(tape);
    FlatStackT<ad::Var> fv;
    for (const auto& l : flat) {
      fv.thickness_nm.push_back(ad::Var::input(l.thickness_nm));
      fv.al_fraction.push_back(ad::Var::input(l.al_fraction));
      fv.role.push_back(l.role);
    }
    SmoothedGeometry<ad::Var> geo(grid, cfg.substrate_pad_nm,
                                  std::span<const ad::Var>(fv.thickness_nm),
                                  cfg.smoothing_width_nm);
    auto p = build_index_profile_t(fv, 1092.0, geo, cfg.smoothing_width_nm,
                                   SubstrateFill::physical, DispersionModelId::gehrsitz);
    benchmark::DoNotOptimize(p.n.data());
    state.counters["tape_nodes"] = static_cast<double>(tape.size());
  }
}
BENCHMARK(bm_index_profile_taped);

}  // namespace

BENCHMARK_MAIN();
