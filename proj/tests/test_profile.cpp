#include "doctest.h"

#include <nlwg/errors.hpp>
#include <nlwg/profile.hpp>
#include <nlwg/stack.hpp>

#include "support.hpp"

#include <cmath>
#include <vector>

using namespace nlwg;
using ad::Var;
using nlwg::test::reference_stack;

namespace {

EpitaxialStack slab(double thickness_nm, double al) {
  EpitaxialStack s;
  s.groups = {
      {LayerRole::substrate, 1, {{0.0, 0.0}}},
      {LayerRole::core, 1, {{thickness_nm, al}}},
      {LayerRole::air, 1, {{0.0, 0.0}}},
  };
  return s;
}

EpitaxialStack two_layer(double t1, double a1, double t2, double a2) {
  EpitaxialStack s;
  s.groups = {
      {LayerRole::substrate, 1, {{0.0, 0.0}}},
      {LayerRole::core, 1, {{t1, a1}, {t2, a2}}},
      {LayerRole::air, 1, {{0.0, 0.0}}},
  };
  return s;
}

// piecewise-constant reference profile from the flattened layer list
double step_value(const EpitaxialStack& s, double stack_x0, double x, double lambda) {
  auto flat = flatten(s);
  if (x < stack_x0) return refractive_index(s.groups[0].sublayers[0].al_fraction, lambda);
  double b = stack_x0;
  for (const auto& l : flat) {
    if (x < b + l.thickness_nm) return refractive_index(l.al_fraction, lambda);
    b += l.thickness_nm;
  }
  return 1.0;
}

}  // namespace

TEST_CASE("uniform slab reproduces the bulk index away from its faces") {
  auto s = slab(3000.0, 0.6);
  auto p = build_index_profile(s, 1550.0, 1.0, 5.0);
  double bulk = refractive_index(0.6, 1550.0);
  // interior samples, > 100 nm from either face
  for (int k = 2100; k <= 4900; k += 350) {
    CAPTURE(k);
    CHECK(p.n[static_cast<std::size_t>(k)] == doctest::Approx(bulk).epsilon(1e-9));
  }
  // far exterior
  CHECK(p.n[100] == doctest::Approx(refractive_index(0.0, 1550.0)).epsilon(1e-9));
  CHECK(p.n.back() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("interface midpoint is the mean of the adjacent indices") {
  auto s = two_layer(100.0, 0.5, 80.0, 0.8);
  double n1 = refractive_index(0.5, 1092.0);
  double n2 = refractive_index(0.8, 1092.0);
  for (double w : {2.0, 5.0, 9.0}) {
    auto p = build_index_profile(s, 1092.0, 1.0, w);
    // interior interface sits exactly on the grid at x = 2100
    CAPTURE(w);
    CHECK(p.n[2100] == doctest::Approx(0.5 * (n1 + n2)).epsilon(1e-9));
  }
}

TEST_CASE("layer centers of the reference design hold bulk values") {
  auto s = reference_stack();
  auto p = build_index_profile(s, 1092.0, 1.0, 5.0);
  // center of the first bottom-mirror layer (x in [2000, 2048.4])
  CHECK(p.n[2024] == doctest::Approx(refractive_index(0.90, 1092.0)).epsilon(1e-9));
  // center of the first buffer (starts at 2000 + 48*107)
  int kbuf = static_cast<int>(std::lround(2000.0 + 48.0 * 107.0 + 0.5 * 120.7));
  CHECK(p.n[static_cast<std::size_t>(kbuf)] ==
        doctest::Approx(refractive_index(0.90, 1092.0)).epsilon(1e-9));
}

TEST_CASE("profile stays within the material index range") {
  auto s = reference_stack();
  auto p = build_index_profile(s, 1092.0, 1.0, 5.0);
  double lo = 1.0, hi = refractive_index(0.0, 1092.0);  // air .. GaAs substrate
  for (double v : p.n) {
    CHECK(v >= lo - 1e-9);
    CHECK(v <= hi + 1e-9);
  }
}

TEST_CASE("smoothing preserves the integrated optical content") {
  auto s = reference_stack();
  auto pa = build_index_profile(s, 1092.0, 1.0, 2.0);
  auto pb = build_index_profile(s, 1092.0, 1.0, 9.0);
  REQUIRE(pa.n.size() == pb.n.size());
  std::vector<double> da(pa.n.size()), db(pb.n.size());
  for (std::size_t k = 0; k < pa.n.size(); ++k) {
    da[k] = pa.n[k] - 1.0;
    db[k] = pb.n[k] - 1.0;
  }
  double ia = trapz(pa.grid, da);
  double ib = trapz(pb.grid, db);
  CHECK(std::abs(ia - ib) / std::abs(ia) < 5e-3);
}

TEST_CASE("narrow smoothing converges to the step profile") {
  auto s = two_layer(100.0, 0.5, 80.0, 0.8);
  auto p = build_index_profile(s, 1092.0, 1.0, 1.0);
  for (int k = 0; k < p.grid.count; k += 7) {
    double x = p.grid.x(k);
    // skip samples within 5 nm of any interface (2000, 2100, 2180)
    if (std::abs(x - 2000.0) < 5.0 || std::abs(x - 2100.0) < 5.0 || std::abs(x - 2180.0) < 5.0)
      continue;
    CAPTURE(x);
    CHECK(p.n[static_cast<std::size_t>(k)] ==
          doctest::Approx(step_value(s, 2000.0, x, 1092.0)).epsilon(1e-6));
  }
}

TEST_CASE("samples on the saturation window edge take the settled value once") {
  // interface at 2100 with the window edge 5 widths away landing exactly on
  // grid samples; each side must settle to its bulk value, not double-count
  auto s = two_layer(100.0, 0.5, 80.0, 0.8);
  double n1 = refractive_index(0.5, 1092.0);
  double n2 = refractive_index(0.8, 1092.0);
  auto p = build_index_profile(s, 1092.0, 1.0, 5.0);
  CHECK(p.n[2125] == doctest::Approx(n2).epsilon(1e-12));
  CHECK(p.n[2075] == doctest::Approx(n1).epsilon(1e-12));
}

TEST_CASE("resolution guards reject unusable discretizations") {
  auto s = reference_stack();  // thinnest layer 48.4 nm
  CHECK_THROWS_AS((void)build_index_profile(s, 1092.0, 20.0, 5.0), ResolutionError);
  CHECK_THROWS_AS((void)build_index_profile(s, 1092.0, 1.0, 30.0), ValidationError);
}

TEST_CASE("taped profile matches the plain profile bit for bit") {
  auto s = reference_stack();
  auto flat = flatten(s);
  ProfileConfig cfg;
  Grid grid = make_grid(total_thickness(s), cfg);

  FlatStackT<double> fd;
  for (const auto& l : flat) {
    fd.thickness_nm.push_back(l.thickness_nm);
    fd.al_fraction.push_back(l.al_fraction);
    fd.role.push_back(l.role);
  }
  SmoothedGeometry<double> gd(grid, cfg.substrate_pad_nm,
                              std::span<const double>(fd.thickness_nm), cfg.smoothing_width_nm);
  auto pd = build_index_profile_t(fd, 1092.0, gd, cfg.smoothing_width_nm,
                                  SubstrateFill::physical, DispersionModelId::gehrsitz);
  auto cd = build_chi2_samples(fd, gd, Chi2Model{});

  ad::Tape tape;
  ad::ScopedTape scope(tape);
  FlatStackT<Var> fv;
  for (const auto& l : flat) {
    fv.thickness_nm.push_back(Var::input(l.thickness_nm));
    fv.al_fraction.push_back(Var::input(l.al_fraction));
    fv.role.push_back(l.role);
  }
  SmoothedGeometry<Var> gv(grid, cfg.substrate_pad_nm, std::span<const Var>(fv.thickness_nm),
                           cfg.smoothing_width_nm);
  auto pv = build_index_profile_t(fv, 1092.0, gv, cfg.smoothing_width_nm,
                                  SubstrateFill::physical, DispersionModelId::gehrsitz);
  auto cv = build_chi2_samples(fv, gv, Chi2Model{});

  REQUIRE(pv.n.size() == pd.n.size());
  int mismatches = 0;
  std::size_t first = 0;
  for (std::size_t k = 0; k < pd.n.size(); ++k) {
    if (pv.n[k].v != pd.n[k] || cv[k].v != cd[k]) {
      if (mismatches == 0) first = k;
      ++mismatches;
    }
  }
  CAPTURE(first);
  CHECK(mismatches == 0);

  // quadrature parity as well
  std::vector<Var> nv(pv.n.begin(), pv.n.end());
  Var iv = trapz(grid, std::span<const Var>(nv));
  CHECK(iv.v == trapz(grid, std::span<const double>(pd.n)));
}

TEST_CASE("profile samples differentiate against thickness perturbations") {
  Grid grid{0.0, 1.0, 4601};
  auto fn = ad::make_function([grid](auto v) {
    using T = typename std::remove_cvref_t<decltype(v)>::value_type;
    std::vector<T> th{v[0], v[1]};
    SmoothedGeometry<T> g(grid, 2000.0, std::span<const T>(th), 5.0);
    std::vector<T> nv{T(3.2), T(3.4)};
    auto out = g.apply(nv, T(3.5), T(1.0));
    return out[2100];
  });
  auto rep = ad::finite_difference_check(fn, std::vector<double>{100.5, 80.0});
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("region map locates the nonlinear core") {
  auto s = reference_stack();
  auto regions = compute_regions(flatten(s), 2000.0);
  CHECK(regions.stack_x0 == doctest::Approx(2000.0));
  CHECK(regions.stack_x1 == doctest::Approx(2000.0 + 9981.8).epsilon(1e-12));
  double core0 = 2000.0 + 48.0 * 107.0 + 120.7;
  CHECK(regions.core_x0 == doctest::Approx(core0).epsilon(1e-12));
  CHECK(regions.core_x1 == doctest::Approx(core0 + 4.0 * 188.1).epsilon(1e-12));
  CHECK(regions.core_buffers_x0 == doctest::Approx(core0 - 120.7).epsilon(1e-12));
  CHECK(regions.core_buffers_x1 == doctest::Approx(core0 + 4.0 * 188.1 + 120.7).epsilon(1e-12));
}

TEST_CASE("grid construction covers stack plus padding") {
  ProfileConfig cfg;
  Grid g = make_grid(9981.8, cfg, 1.4);
  CHECK(g.x0_nm == 0.0);
  CHECK(g.dx_nm == 1.0);
  // 2000 + 1.4 * 9981.8 + 500
  CHECK(g.extent() == doctest::Approx(2000.0 + 1.4 * 9981.8 + 500.0).epsilon(1e-4));
  CHECK_THROWS_AS((void)make_grid(1000.0, ProfileConfig{.grid_dx_nm = -1.0}), ValidationError);
}
