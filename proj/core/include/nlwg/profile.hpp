#pragma once

// Transverse evaluation grid and smoothed step profiles.
//
// A design evaluation builds one SmoothedGeometry (layer boundaries + logistic
// transition factors on the grid) and reuses it for every profile that shares
// the geometry: index at the three design wavelengths and the chi2 profile.
// Outside a transition window of +-40 sigma-widths the logistic is saturated
// beyond double precision, so samples there take the bulk layer value directly
// (for differentiable scalars: the same tape node, which keeps tied repeats
// cheap and lets solvers merge uniform runs without losing gradient paths).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nlwg/ad.hpp"
#include "nlwg/errors.hpp"
#include "nlwg/materials.hpp"
#include "nlwg/stack.hpp"

namespace nlwg {

struct Grid {
  double x0_nm = 0.0;
  double dx_nm = 1.0;
  int count = 0;
  double x(int k) const { return x0_nm + k * dx_nm; }
  double extent() const { return dx_nm * (count - 1); }
};

template <class T>
struct ProfileT {
  Grid grid;
  double lambda_nm = 0.0;
  double smoothing_width_nm = 0.0;
  std::vector<T> n;
};
using IndexProfile = ProfileT<double>;

struct ProfileConfig {
  double grid_dx_nm = 1.0;
  double smoothing_width_nm = 5.0;
  double substrate_pad_nm = 2000.0;  // evanescent-tail room below the stack
  double air_pad_nm = 500.0;
  DispersionModelId dispersion = DispersionModelId::gehrsitz;
};

// The stack occupies [substrate_pad, substrate_pad + total]; headroom > 1
// reserves room for thickness growth during optimization so the grid can stay
// fixed across an entire run.
Grid make_grid(double total_thickness_nm, const ProfileConfig& cfg, double headroom = 1.0);

namespace detail {

template <class T>
T logistic(const T& u) {
  using std::exp;
  using ad::exp;
  if (val(u) >= 0.0) {
    T t = exp(-u);
    return 1.0 / (1.0 + t);
  }
  T t = exp(u);
  return t / (1.0 + t);
}

}  // namespace detail

template <class T>
class SmoothedGeometry {
 public:
  // logistic scale = width/8; the 40-scale saturation window is then exactly
  // five widths, and the transition is broad enough that a 1 nm grid renders
  // it without measurable aliasing in the mode solver
  static constexpr double kScaleDivisor = 8.0;
  static constexpr double kSaturation = 40.0;  // window half-width in scales

  SmoothedGeometry(const Grid& grid, double stack_x0, std::span<const T> thickness,
                   double smoothing_width_nm)
      : grid_(grid), s_(smoothing_width_nm / kScaleDivisor) {
    const std::size_t nlay = thickness.size();
    boundary_.reserve(nlay + 1);
    boundary_.push_back(T(stack_x0));
    for (std::size_t i = 0; i < nlay; ++i) boundary_.push_back(boundary_.back() + thickness[i]);
    const double window = kSaturation * s_;
    if (val(boundary_.back()) + window > grid.x(grid.count - 1))
      throw ShapeError("stack extends beyond the evaluation grid; rebuild with more headroom");
    if (val(boundary_.front()) - window < grid.x0_nm)
      throw ShapeError("stack start leaves no substrate padding on the grid");

    base_.resize(static_cast<std::size_t>(grid.count));
    std::size_t ptr = 0;
    for (int k = 0; k < grid.count; ++k) {
      const double xk = grid.x(k);
      // strict: a boundary exactly at xk - window still belongs to the term
      // window below, and must not be folded into the base value as well
      while (ptr < boundary_.size() && val(boundary_[ptr]) < xk - window) ++ptr;
      base_[static_cast<std::size_t>(k)] = static_cast<std::int32_t>(ptr);
    }

    const double inv_s = 1.0 / s_;
    for (std::size_t i = 0; i < boundary_.size(); ++i) {
      const double b = val(boundary_[i]);
      int klo = static_cast<int>(std::ceil((b - window - grid.x0_nm) / grid.dx_nm));
      int khi = static_cast<int>(std::floor((b + window - grid.x0_nm) / grid.dx_nm));
      klo = std::max(klo, 0);
      khi = std::min(khi, grid.count - 1);
      for (int k = klo; k <= khi; ++k) {
        T sig = detail::logistic((grid.x(k) - boundary_[i]) * inv_s);
        terms_.push_back({k, static_cast<std::int32_t>(i), std::move(sig)});
      }
    }
  }

  // layer_values[i] belongs between boundary i and i+1; below/above are the
  // semi-infinite exterior values.
  std::vector<T> apply(std::span<const T> layer_values, const T& below, const T& above) const {
    const std::size_t nlay = boundary_.size() - 1;
    if (layer_values.size() != nlay)
      throw ShapeError("layer value count does not match geometry");
    std::vector<T> dv(nlay + 1);
    for (std::size_t i = 0; i <= nlay; ++i) {
      const T& right = i == nlay ? above : layer_values[i];
      const T& left = i == 0 ? below : layer_values[i - 1];
      dv[i] = right - left;
    }
    std::vector<T> out(static_cast<std::size_t>(grid_.count));
    for (int k = 0; k < grid_.count; ++k) {
      const std::int32_t j = base_[static_cast<std::size_t>(k)];
      out[static_cast<std::size_t>(k)] =
          j == 0 ? below : (j <= static_cast<std::int32_t>(nlay) ? layer_values[j - 1] : above);
    }
    for (const Term& t : terms_) {
      T& slot = out[static_cast<std::size_t>(t.sample)];
      T cand = slot + dv[static_cast<std::size_t>(t.interface)] * t.sigma;
      // skip value-absorbed tail terms (|dv·sigma| below rounding): the taped
      // path then spends a new node exactly where the plain value moves, and
      // the pump's run-merging sees the same slab structure on both paths
      if (val(cand) != val(slot)) slot = std::move(cand);
    }
    return out;
  }

  const Grid& grid() const { return grid_; }
  const std::vector<T>& boundaries() const { return boundary_; }
  double scale() const { return s_; }

 private:
  struct Term {
    std::int32_t sample, interface;
    T sigma;
  };
  Grid grid_;
  double s_;
  std::vector<T> boundary_;
  std::vector<std::int32_t> base_;
  std::vector<Term> terms_;
};

enum class SubstrateFill {
  physical,  // substrate material index below the stack (pump convention)
  clamp      // continue the first layer downward (bound-mode convention: the
             // high-index substrate supports no true bound mode; the thick
             // bottom mirror makes the approximation exact to solver noise)
};

template <class T>
ProfileT<T> build_index_profile_t(const FlatStackT<T>& flat, double lambda_nm,
                                  const SmoothedGeometry<T>& geo, double smoothing_width_nm,
                                  SubstrateFill fill, DispersionModelId model) {
  std::vector<T> nvals;
  nvals.reserve(flat.al_fraction.size());
  for (const T& x : flat.al_fraction) nvals.push_back(index_model(x, lambda_nm, model));
  T below = fill == SubstrateFill::clamp ? nvals.front()
                                         : index_model(T(flat.substrate_al), lambda_nm, model);
  ProfileT<T> p;
  p.grid = geo.grid();
  p.lambda_nm = lambda_nm;
  p.smoothing_width_nm = smoothing_width_nm;
  p.n = geo.apply(nvals, below, T(1.0));
  return p;
}

template <class T>
std::vector<T> build_chi2_samples(const FlatStackT<T>& flat, const SmoothedGeometry<T>& geo,
                                  const Chi2Model& model) {
  std::vector<T> vals;
  vals.reserve(flat.al_fraction.size());
  for (const T& x : flat.al_fraction) vals.push_back(chi2_value(x, model));
  // physical exterior: AlGaAs substrate below, nothing above
  return geo.apply(vals, chi2_value(T(flat.substrate_al), model), T(0.0));
}

// Spec'd one-shot builder on a fresh grid (physical substrate convention).
IndexProfile build_index_profile(const EpitaxialStack& stack, double lambda_nm,
                                 double grid_spacing_nm, double smoothing_width_nm,
                                 DispersionModelId model = DispersionModelId::gehrsitz);

struct RegionMap {
  double stack_x0 = 0.0, stack_x1 = 0.0;
  double core_x0 = 0.0, core_x1 = 0.0;                  // core layers only
  double core_buffers_x0 = 0.0, core_buffers_x1 = 0.0;  // core plus buffers
};
RegionMap compute_regions(const std::vector<FlatLayer>& flat, double stack_x0);

// --- quadrature on the uniform grid -------------------------------------------
// Both overloads accumulate in the same order (interior left fold, endpoints
// after) so plain and taped evaluations agree bit for bit.

inline double trapz(const Grid& g, std::span<const double> f) {
  double acc = 0.0;
  for (std::size_t k = 1; k + 1 < f.size(); ++k) acc += f[k];
  return acc * g.dx_nm + (f.front() + f.back()) * (0.5 * g.dx_nm);
}

inline ad::Var trapz(const Grid& g, std::span<const ad::Var> f) {
  ad::Var acc = ad::sum_scaled(f.subspan(1, f.size() - 2), g.dx_nm);
  return acc + (f.front() + f.back()) * (0.5 * g.dx_nm);
}

}  // namespace nlwg
