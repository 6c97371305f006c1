#pragma once

// Optical constants of Al_x Ga_{1-x} As at room temperature (fixed 300 K):
// refractive index (two published dispersion models), bandgap/transparency,
// and the effective second-order nonlinearity vs composition.
//
// Index models are templated over the scalar type so composition can be a
// differentiable quantity on the design path; wavelength is always a plain
// constant (single-wavelength models by construction).

#include <cmath>
#include <string>
#include <vector>

#include "nlwg/ad.hpp"
#include "nlwg/errors.hpp"

namespace nlwg {

inline constexpr double kHcEvNm = 1239.842;  // h*c, eV*nm (CODATA)

enum class DispersionModelId { gehrsitz, afromowitz };

std::string to_string(DispersionModelId id);
DispersionModelId dispersion_model_from_string(const std::string& s);

namespace detail {

template <class T, std::size_t N>
T horner(const T& x, const double (&c)[N]) {
  T acc(c[N - 1]);
  for (std::size_t k = N - 1; k-- > 0;) acc = acc * x + c[k];
  return acc;
}

}  // namespace detail

// Gehrsitz, Bosch, Gini, Zappettini, Ilegems, J. Appl. Phys. 87, 7825 (2000):
// multi-oscillator fit n^2 = A + C0/(E0^2-E^2) + C1/(E1^2-E^2) + phonon terms,
// with E = 1/lambda in 1/um. Temperature-dependent parameters are evaluated at
// 300 K and frozen here (temperature dependence is out of scope):
//   A(300K, x=0)    = 5.9613 + 7.178e-4*300 - 0.953e-6*300^2 = 6.09087
//   E1^2(300K, x=0) = 4.7171 - 3.237e-4*300 - 1.358e-6*300^2 = 4.49777 um^-2
// Composition polynomials, oscillator strengths, and the two lattice (phonon)
// resonances are the paper's mixed-crystal fit.
template <class T>
T index_gehrsitz(const T& x, double lambda_nm) {
  using std::sqrt;
  using ad::sqrt;
  const double e = 1000.0 / lambda_nm;  // 1/um
  const double e2 = e * e;

  static constexpr double kA[] = {6.09087, -16.159, 43.511, -71.317, 57.535, -17.451};
  static constexpr double kC0Inv[] = {50.535, -150.7, -62.209, 797.16, -1125.0, 503.79};  // um^2
  static constexpr double kE0Ev[] = {1.4251, 1.1308, 0.1436};  // eV (300 K)
  static constexpr double kE1Sq[] = {4.49777, 11.006, -3.08};  // um^-2 (300 K)
  static constexpr double kC1[] = {21.5647, 113.74, -122.5, 108.401, -47.318};
  constexpr double kC2 = 1.55e-3, kE2Sq = 0.724e-3;  // GaAs-like phonon, um^-2
  constexpr double kC3 = 2.61e-3, kE3Sq = 1.331e-3;  // AlAs-like phonon, um^-2

  T a = detail::horner(x, kA);
  T c0 = 1.0 / detail::horner(x, kC0Inv);
  T e0 = detail::horner(x, kE0Ev) * (1.0 / (kHcEvNm / 1000.0));  // eV -> 1/um
  T e1sq = detail::horner(x, kE1Sq);
  T c1 = detail::horner(x, kC1);

  T n2 = a + c0 / (e0 * e0 - e2) + c1 / (e1sq - e2) + ((1.0 - x) * kC2) / (kE2Sq - e2) +
         (x * kC3) / (kE3Sq - e2);
  return sqrt(n2);
}

// Afromowitz, Solid State Commun. 15, 59 (1974): modified single-effective-
// oscillator model, used for cross-validation. E0, Ed, Eg in eV.
template <class T>
T index_afromowitz(const T& x, double lambda_nm) {
  using std::log;
  using std::sqrt;
  using ad::log;
  using ad::sqrt;
  const double eph = kHcEvNm / lambda_nm;  // photon energy, eV
  const double e2 = eph * eph, e4 = e2 * e2;

  static constexpr double kE0[] = {3.65, 0.871, 0.179};
  static constexpr double kEd[] = {36.1, -2.45};
  static constexpr double kEg[] = {1.424, 1.266, 0.26};

  T e0 = detail::horner(x, kE0);
  T ed = detail::horner(x, kEd);
  T eg = detail::horner(x, kEg);
  T e0sq = e0 * e0;
  T egsq = eg * eg;
  T eta_over_pi = ed / (2.0 * (e0sq * e0) * (e0sq - egsq));
  T n2 = 1.0 + ed / e0 + (ed / (e0sq * e0)) * e2 +
         eta_over_pi * e4 * log((2.0 * e0sq - egsq - e2) / (egsq - e2));
  return sqrt(n2);
}

template <class T>
T index_model(const T& x, double lambda_nm, DispersionModelId id) {
  return id == DispersionModelId::gehrsitz ? index_gehrsitz(x, lambda_nm)
                                           : index_afromowitz(x, lambda_nm);
}

struct ValidityWindow {
  double lambda_min_nm = 0.0;
  double lambda_max_nm = 0.0;
};

// Below-resonance region where the fit is meaningful: from 2% above the
// model's fundamental-resonance pole (composition dependent) up to 2500 nm,
// floored at 500 nm.
ValidityWindow validity_window(DispersionModelId id, double al_fraction);

// Strict evaluation: range error outside the validity window.
double refractive_index(double al_fraction, double lambda_nm,
                        DispersionModelId id = DispersionModelId::gehrsitz);

// Lowest bandgap at 300 K, min of the direct (Gamma) and indirect (X) valleys;
// composition dependence per Vurgaftman, Meyer, Ram-Mohan, J. Appl. Phys. 89,
// 5815 (2001) (Gamma bowing above the x = 0.45 crossover) with the standard
// 300 K endpoints E_Gamma(0) = 1.424 eV, E_X(0) = 1.900 eV.
double bandgap_ev(double al_fraction);

// True iff the photon energy lies below bandgap_ev(x) minus the margin.
bool is_transparent(double al_fraction, double lambda_nm, double margin_ev = 0.050);

// chi2(x) linearly interpolated between endpoint d14 values. Defaults are
// literature-typical magnitudes (config, not ground truth): d14(GaAs) ~ 119
// pm/V (Shoji et al., J. Opt. Soc. Am. B 14, 2268 (1997), scaled to the
// 1.5 um band), d14(AlAs) ~ 32 pm/V (Ohashi et al., J. Appl. Phys. 74, 596
// (1993) composition trend endpoint).
struct Chi2Model {
  double d14_gaas_pmv = 119.0;
  double d14_alas_pmv = 32.0;
};

template <class T>
T chi2_value(const T& x, const Chi2Model& m) {
  return m.d14_gaas_pmv + (m.d14_alas_pmv - m.d14_gaas_pmv) * x;
}

std::vector<double> chi2_profile(const std::vector<double>& composition, const Chi2Model& m);

}  // namespace nlwg
