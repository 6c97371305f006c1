#pragma once

// Reference 1D multilayer guided-mode eigensolver (plain double, not taped):
// the ground truth that trains and audits the field surrogate.
//
// TE solves for E_y with (E, E') continuous; TM solves for the transverse
// displacement component directly -- for a slab, D is proportional to H_y, so
// the working state is (H, H'/n^2), both components continuous across
// interfaces. Runs of equal-index samples are merged into piecewise-constant
// cells (each sample owns [x_k - dx/2, x_k + dx/2)), and the transfer across
// each cell is the exact cos/cosh two-by-two propagator.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlwg/profile.hpp"

namespace nlwg {

enum class Polarization { te, tm };

std::string to_string(Polarization pol);
Polarization polarization_from_string(const std::string& s);

struct GuidedMode {
  Polarization polarization = Polarization::te;
  double n_eff = 0.0;
  double lambda_nm = 0.0;
  int mode_order = 0;          // interior sign changes
  std::vector<double> field;   // on the profile grid, nm^(-1/2); TE: E_y, TM: D
};

// All bound modes (n_eff above both exterior indices), descending n_eff, at
// most max_modes entries (all if max_modes <= 0). Fields are unit-normalized,
// integral of field^2 dx = 1 on the grid, sign positive at the field maximum.
// No bound mode -> empty list.
std::vector<GuidedMode> solve_modes(const IndexProfile& profile, Polarization pol, int max_modes);

// E(x) = D(x)/n^2(x) pointwise; no renormalization.
std::vector<double> reconstruct_tm_efield(const GuidedMode& mode, const IndexProfile& profile);

// Fraction of the (unit) mode energy inside [x0, x1].
double energy_fraction(const GuidedMode& mode, const Grid& grid, double x0_nm, double x1_nm);

// The physically fundamental mode: among the top three by n_eff, the one with
// the largest energy fraction inside the core window. Index into `modes`.
std::size_t select_fundamental(std::span<const GuidedMode> modes, const Grid& grid,
                               double core_x0_nm, double core_x1_nm);

// Effective indices (n_TE, n_TM) of the order-0 modes of the two profiles.
std::pair<double, double> birefringence(const IndexProfile& profile_te,
                                        const IndexProfile& profile_tm);

// CSV dump: header comments (lambda, polarization, n_eff), then x_nm,field
// rows at 17 significant digits.
std::string mode_to_csv(const GuidedMode& mode, const Grid& grid);

}  // namespace nlwg
