#pragma once

// Oblique-incidence s-polarized plane-wave solver for the pump.
//
// The pump arrives from the air side (high-x end of the grid) and propagates
// toward the substrate. Each maximal run of equal profile samples forms one
// uniform slab; within slab c the field is
//   E(xi) = A_c exp(i k_c xi) + B_c exp(-i k_c xi),
// with xi measured downward from the slab's top edge and k_c the longitudinal
// wavevector (Im k >= 0, so evanescent waves decay along +xi). Reflection
// ratios rho = B/A are built bottom-up (every factor has modulus <= 1), then
// amplitudes are pushed top-down through the interface continuity conditions;
// the recursion never multiplies a growing exponential, so arbitrarily thick
// mirrors stay conditioned.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "nlwg/cplx.hpp"
#include "nlwg/errors.hpp"
#include "nlwg/profile.hpp"
#include "nlwg/stack.hpp"

namespace nlwg {

enum class PumpPolarization { s };

template <class T>
struct PumpFieldT {
  Grid grid;
  double lambda_nm = 0.0;
  T theta_deg{};
  std::vector<Cx<T>> phi_plus;   // downward component (toward the substrate)
  std::vector<Cx<T>> phi_minus;  // upward component
  T reflectance{};
  T transmittance{};
};
using PumpField = PumpFieldT<double>;

namespace detail {

// merge criterion: equal values on both scalar paths, so the taped and plain
// evaluations walk the same slab sequence. Equal adjacent samples only arise
// from saturated smoothing (same upstream node) or rounding-absorbed logistic
// tails, where the two candidate nodes' adjoints agree below value rounding;
// collapsing the run is therefore gradient-safe as well.
inline bool same_sample(double a, double b) { return a == b; }
inline bool same_sample(const ad::Var& a, const ad::Var& b) { return a.v == b.v; }

template <class T>
struct PumpSlab {
  int first, count;
  T n;
};

template <class T>
std::vector<PumpSlab<T>> merge_runs(const ProfileT<T>& p) {
  std::vector<PumpSlab<T>> slabs;
  const int count = p.grid.count;
  int k = 0;
  while (k < count) {
    int j = k + 1;
    while (j < count &&
           same_sample(p.n[static_cast<std::size_t>(j)], p.n[static_cast<std::size_t>(k)]))
      ++j;
    slabs.push_back({k, j - k, p.n[static_cast<std::size_t>(k)]});
    k = j;
  }
  return slabs;
}

// exp(+i z) and exp(-i z) for complex z, bounded when Im z >= 0 resp. used
// with the matching sign of the argument
template <class T>
Cx<T> exp_iz(const Cx<T>& z) {
  return cexp(Cx<T>(-z.im, z.re));
}

}  // namespace detail

template <class T>
PumpFieldT<T> pump_field_t(const ProfileT<T>& profile, const T& theta_deg,
                           PumpPolarization = PumpPolarization::s) {
  if (profile.grid.count < 1 || profile.n.size() != static_cast<std::size_t>(profile.grid.count))
    throw ValidationError("index profile is empty or inconsistent with its grid");
  if (profile.lambda_nm <= 0.0) throw ValidationError("profile wavelength must be positive");
  if (!(val(theta_deg) >= 0.0 && val(theta_deg) < 90.0))
    throw RangeError("pump incidence angle must lie in [0, 90) degrees");

  const double k0 = 2.0 * M_PI / profile.lambda_nm;
  const double dx = profile.grid.dx_nm;

  auto slabs = detail::merge_runs(profile);
  const std::size_t m = slabs.size();

  // theta is measured inside the incidence medium (the top of the grid; air
  // in every physical stack), and the transverse wavevector it fixes is
  // conserved across the interfaces
  T kz = slabs.back().n * k0 * ad::sin_cos(theta_deg * (M_PI / 180.0)).first;
  T kz2 = kz * kz;

  std::vector<Cx<T>> kx;
  kx.reserve(m);
  for (const auto& s : slabs) kx.push_back(sqrt_real_to_cx(s.n * s.n * (k0 * k0) - kz2));

  PumpFieldT<T> out;
  out.grid = profile.grid;
  out.lambda_nm = profile.lambda_nm;
  out.theta_deg = theta_deg;
  out.phi_plus.resize(profile.n.size());
  out.phi_minus.resize(profile.n.size());

  if (m == 1) {  // uniform medium: the incident wave just passes through
    for (int k = 0; k < profile.grid.count; ++k) {
      const double xi = profile.grid.x(profile.grid.count - 1) - profile.grid.x(k);
      out.phi_plus[static_cast<std::size_t>(k)] = detail::exp_iz(Cx<T>(kx[0].re * xi, kx[0].im * xi));
      out.phi_minus[static_cast<std::size_t>(k)] = Cx<T>(T(0.0));
    }
    out.reflectance = T(0.0);
    out.transmittance = T(1.0);
    return out;
  }

  // widths; the outermost slabs act as semi-infinite media
  std::vector<double> width(m);
  for (std::size_t c = 0; c < m; ++c) width[c] = slabs[c].count * dx;

  // rho_top[c] = B/A at the top edge of slab c, rho_bot[c] at its bottom
  // edge; built bottom-up so every factor has modulus <= 1 (evanescent phases
  // only ever multiply, never divide)
  std::vector<Cx<T>> rho_top(m), rho_bot(m);
  rho_top[0] = rho_bot[0] = Cx<T>(T(0.0));  // nothing returns from the transmission side
  for (std::size_t c = 1; c < m; ++c) {
    Cx<T> r = (kx[c] - kx[c - 1]) / (kx[c] + kx[c - 1]);
    rho_bot[c] = (r + rho_top[c - 1]) / (Cx<T>(T(1.0)) + r * rho_top[c - 1]);
    if (c + 1 < m) {
      Cx<T> ph = detail::exp_iz(Cx<T>(kx[c].re * (2.0 * width[c]), kx[c].im * (2.0 * width[c])));
      rho_top[c] = rho_bot[c] * ph;
    } else {
      rho_top[c] = rho_bot[c];  // incidence slab: referenced at its bottom edge
    }
  }

  // downward amplitude pass; A referenced at each slab's top edge (bottom
  // edge for the incidence slab), B recovered from the local reflection ratio
  std::vector<Cx<T>> A(m), B(m);
  A[m - 1] = Cx<T>(T(1.0));
  B[m - 1] = rho_bot[m - 1];
  for (std::size_t c = m - 1; c-- > 0;) {
    Cx<T> a_if = A[c + 1];
    if (c + 2 < m) {  // move the upper slab's downward amplitude to its bottom edge
      Cx<T> ph = detail::exp_iz(Cx<T>(kx[c + 1].re * width[c + 1], kx[c + 1].im * width[c + 1]));
      a_if = A[c + 1] * ph;
    }
    Cx<T> b_if = rho_bot[c + 1] * a_if;
    // tangential continuity of E and dE/dxi across the interface
    Cx<T> sum = a_if + b_if;
    Cx<T> dif = (kx[c + 1] / kx[c]) * (a_if - b_if);
    A[c] = (sum + dif) * 0.5;
    B[c] = rho_top[c] * A[c];
  }

  // sample the two components on the grid
  for (std::size_t c = 0; c < m; ++c) {
    // top reference position of slab c: its last sample + dx/2, except for the
    // incidence slab, whose reference is its bottom edge
    double x_ref;
    if (c + 1 == m)
      x_ref = profile.grid.x(slabs[c].first) - 0.5 * dx;
    else
      x_ref = profile.grid.x(slabs[c].first + slabs[c].count - 1) + 0.5 * dx;
    for (int j = 0; j < slabs[c].count; ++j) {
      const std::size_t k = static_cast<std::size_t>(slabs[c].first + j);
      const double xi = x_ref - profile.grid.x(static_cast<int>(k));
      Cx<T> down = detail::exp_iz(Cx<T>(kx[c].re * xi, kx[c].im * xi));
      out.phi_plus[k] = A[c] * down;
      // the upward factor is the reciprocal phase; evaluated via exp(-i k xi)
      Cx<T> up = detail::exp_iz(Cx<T>(kx[c].re * (-xi), kx[c].im * (-xi)));
      out.phi_minus[k] = B[c] * up;
    }
  }

  out.reflectance = norm(rho_bot[m - 1]);
  // s-pol power flux ~ Re(kx) |A|^2; incidence slab is always propagating
  out.transmittance = (kx[0].re / kx[m - 1].re) * norm(A[0]);
  return out;
}

// total field E_p = phi_plus + phi_minus, the quantity the overlap integral uses
template <class T>
std::vector<Cx<T>> total_field(const PumpFieldT<T>& f) {
  std::vector<Cx<T>> e(f.phi_plus.size());
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = f.phi_plus[k] + f.phi_minus[k];
  return e;
}

PumpField pump_field(const IndexProfile& profile, double theta_deg,
                     PumpPolarization pol = PumpPolarization::s);

// throws ConstraintError naming the first sublayer that absorbs at lambda_p
void ensure_pump_transparency(const EpitaxialStack& stack, double lambda_p_nm,
                              double margin_ev = 0.050);

// |E_p|^2 integrated over [x0, x1] for a frozen profile, scanning only the
// vacuum wavelength (material dispersion held at the build wavelength)
std::vector<std::pair<double, double>> cavity_resonance_scan(const IndexProfile& profile,
                                                             double theta_deg,
                                                             double lambda_min_nm,
                                                             double lambda_max_nm, int n_points,
                                                             double core_x0_nm, double core_x1_nm);

std::string pump_to_csv(const PumpField& field);
std::string scan_to_csv(const std::vector<std::pair<double, double>>& scan);

}  // namespace nlwg
