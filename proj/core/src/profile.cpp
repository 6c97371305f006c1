#include "nlwg/profile.hpp"

#include <algorithm>
#include <cmath>

namespace nlwg {

Grid make_grid(double total_thickness_nm, const ProfileConfig& cfg, double headroom) {
  if (!(cfg.grid_dx_nm > 0.0)) throw ValidationError("grid spacing must be positive");
  Grid g;
  g.x0_nm = 0.0;
  g.dx_nm = cfg.grid_dx_nm;
  const double extent = cfg.substrate_pad_nm + headroom * total_thickness_nm + cfg.air_pad_nm;
  g.count = static_cast<int>(std::lround(extent / cfg.grid_dx_nm)) + 1;
  return g;
}

IndexProfile build_index_profile(const EpitaxialStack& stack, double lambda_nm,
                                 double grid_spacing_nm, double smoothing_width_nm,
                                 DispersionModelId model) {
  validate_stack(stack, /*check_transparency=*/false);
  const std::vector<FlatLayer> layers = flatten(stack);
  double min_thickness = layers.front().thickness_nm;
  for (const FlatLayer& l : layers) min_thickness = std::min(min_thickness, l.thickness_nm);
  if (grid_spacing_nm > min_thickness / 4.0)
    throw ResolutionError("grid spacing " + std::to_string(grid_spacing_nm) +
                          " nm too coarse for thinnest layer " + std::to_string(min_thickness) +
                          " nm (need <= thickness/4)");
  if (smoothing_width_nm >= min_thickness / 2.0)
    throw ValidationError("smoothing width " + std::to_string(smoothing_width_nm) +
                          " nm too large for thinnest layer " + std::to_string(min_thickness) +
                          " nm (need < thickness/2)");

  ProfileConfig cfg;
  cfg.grid_dx_nm = grid_spacing_nm;
  cfg.smoothing_width_nm = smoothing_width_nm;
  cfg.dispersion = model;
  const Grid grid = make_grid(total_thickness(stack), cfg);

  FlatStackT<double> flat;
  flat.substrate_al = stack.groups.front().sublayers.front().al_fraction;
  for (const FlatLayer& l : layers) {
    flat.thickness_nm.push_back(l.thickness_nm);
    flat.al_fraction.push_back(l.al_fraction);
    flat.role.push_back(l.role);
  }
  SmoothedGeometry<double> geo(grid, cfg.substrate_pad_nm, flat.thickness_nm, smoothing_width_nm);
  return build_index_profile_t(flat, lambda_nm, geo, smoothing_width_nm, SubstrateFill::physical,
                               model);
}

RegionMap compute_regions(const std::vector<FlatLayer>& flat, double stack_x0) {
  RegionMap r;
  r.stack_x0 = stack_x0;
  double x = stack_x0;
  bool core_seen = false, cb_seen = false;
  for (const FlatLayer& l : flat) {
    const double x1 = x + l.thickness_nm;
    if (l.role == LayerRole::core) {
      if (!core_seen) r.core_x0 = x;
      r.core_x1 = x1;
      core_seen = true;
    }
    if (l.role == LayerRole::core || l.role == LayerRole::buffer) {
      if (!cb_seen) r.core_buffers_x0 = x;
      r.core_buffers_x1 = x1;
      cb_seen = true;
    }
    x = x1;
  }
  r.stack_x1 = x;
  return r;
}

}  // namespace nlwg
