#include <benchmark/benchmark.h>

#include <nlwg/modes.hpp>
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

// the reference path's unit of work: all bound modes of the full cavity
// (clamped substrate fill, the convention every mode solve uses)
void bm_solve_modes(benchmark::State& state) {
  auto s = bench_stack();
  const bool tm = state.range(0) != 0;
  const double lambda = tm ? 1550.0 : 1092.0;
  auto flat = flatten(s);
  ProfileConfig cfg;
  Grid grid = make_grid(total_thickness(s), cfg);
  FlatStackT<double> fv;
  for (const auto& l : flat) {
    fv.thickness_nm.push_back(l.thickness_nm);
    fv.al_fraction.push_back(l.al_fraction);
    fv.role.push_back(l.role);
  }
  SmoothedGeometry<double> geo(grid, cfg.substrate_pad_nm,
                               std::span<const double>(fv.thickness_nm),
                               cfg.smoothing_width_nm);
  auto p = build_index_profile_t(fv, lambda, geo, cfg.smoothing_width_nm, SubstrateFill::clamp,
                                 DispersionModelId::gehrsitz);
  for (auto _ : state) {
    auto modes = solve_modes(p, tm ? Polarization::tm : Polarization::te, 3);
    benchmark::DoNotOptimize(modes.data());
  }
  state.counters["samples"] = static_cast<double>(p.grid.count);
}
BENCHMARK(bm_solve_modes)->Arg(0)->Arg(1);

}  // namespace
