#include <benchmark/benchmark.h>

#include <nlwg/profile.hpp>
#include <nlwg/pump.hpp>
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

// oblique transfer through the 176-interface mirror pair at the pump line
void bm_pump_field(benchmark::State& state) {
  auto s = bench_stack();
  const double dx = static_cast<double>(state.range(0));
  auto p = build_index_profile(s, 640.65, dx, 5.0);
  for (auto _ : state) {
    auto f = pump_field(p, 34.0);
    benchmark::DoNotOptimize(f.reflectance);
  }
  state.counters["samples"] = static_cast<double>(p.grid.count);
}
BENCHMARK(bm_pump_field)->Arg(1)->Arg(4);

}  // namespace
