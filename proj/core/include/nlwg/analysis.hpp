#pragma once

// Downstream physics of a designed source: effective-index dispersion tables,
// pump-angle tuning curves of the two counterpropagating pair processes,
// joint spectral amplitudes with filtering and marginals, the biphoton
// polarization state and its concurrence, ion-photon amplitude bookkeeping,
// and the heralded-rate ledger.

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nlwg/errors.hpp"
#include "nlwg/modes.hpp"
#include "nlwg/profile.hpp"
#include "nlwg/stack.hpp"

namespace nlwg {

inline constexpr double kSpeedOfLightNmPerS = 2.99792458e17;

inline double angular_frequency_rad_s(double lambda_nm) {
  return 2.0 * M_PI * kSpeedOfLightNmPerS / lambda_nm;
}
inline double wavelength_from_omega_nm(double omega_rad_s) {
  return 2.0 * M_PI * kSpeedOfLightNmPerS / omega_rad_s;
}

// Pair processes named signal-polarization first: hv is a TE (H) signal with
// a TM (V) idler, vh the reverse. The signal always runs along +z, the idler
// along -z.
enum class PairProcess { hv, vh };

std::string to_string(PairProcess p);
Polarization signal_polarization(PairProcess p);
Polarization idler_polarization(PairProcess p);

// --- effective-index dispersion -------------------------------------------------

// Fundamental-mode n_eff vs wavelength for one polarization: solver samples
// joined by a natural cubic spline. Queries outside the sampled window throw
// RangeError rather than extrapolate.
class ModeDispersion {
 public:
  // solves the fundamental mode at n_samples wavelengths spanning [lo, hi]
  static ModeDispersion solve(const EpitaxialStack& stack, Polarization pol, double lambda_lo_nm,
                              double lambda_hi_nm, int n_samples = 16,
                              const ProfileConfig& cfg = {});
  // spline through caller-supplied knots (ascending lambda); the seam for
  // synthetic dispersion in tests and for precomputed tables
  static ModeDispersion from_table(Polarization pol, std::vector<double> lambda_nm,
                                   std::vector<double> n_eff);

  double n_eff(double lambda_nm) const;
  double group_index(double lambda_nm) const;  // n - lambda dn/dlambda
  double lambda_lo_nm() const { return x_.front(); }
  double lambda_hi_nm() const { return x_.back(); }
  Polarization polarization() const { return pol_; }
  const std::vector<double>& knots_lambda_nm() const { return x_; }
  const std::vector<double>& knots_n_eff() const { return y_; }

 private:
  ModeDispersion() = default;
  void build_spline();
  std::size_t segment(double lambda_nm) const;
  Polarization pol_ = Polarization::te;
  std::vector<double> x_, y_, m_;  // knots and spline second derivatives
};

// --- tuning curves --------------------------------------------------------------

struct TuningSample {
  double theta_deg = 0.0;
  double lambda_signal_nm = 0.0;
  double lambda_idler_nm = 0.0;
};

struct TuningCurve {
  PairProcess process = PairProcess::hv;
  std::vector<TuningSample> samples;
  std::vector<double> gap_theta_deg;  // scanned angles with no matched pair in the window
};

struct TuningCurvePair {
  TuningCurve hv, vh;
  double lambda_p_nm = 0.0;
};

struct TuningConfig {
  double theta_lo_deg = 32.0;
  double theta_hi_deg = 36.0;
  int n_points = 81;
  // signal search window; zeros derive the widest window the dispersion
  // tables can serve through energy conservation, capped at degeneracy
  double signal_lo_nm = 0.0;
  double signal_hi_nm = 0.0;
};

// Matched emission wavelengths of one process at one pump angle: the root of
// the longitudinal momentum balance along the energy-conservation line
// 1/lambda_s + 1/lambda_i = 1/lambda_p. Empty when no root lies in the
// window.
std::optional<TuningSample> tuning_point(const ModeDispersion& te, const ModeDispersion& tm,
                                         PairProcess process, double lambda_p_nm, double theta_deg,
                                         double signal_lo_nm = 0.0, double signal_hi_nm = 0.0);

TuningCurvePair tuning_curves(const ModeDispersion& te, const ModeDispersion& tm,
                              double lambda_p_nm, const TuningConfig& cfg = {});

// Dispersion solved on the stack (16-sample tables per polarization over a
// window sized from the stack's design wavelengths), then delegated to the
// table overload. The pump wavelength is rederived from energy conservation.
TuningCurvePair tuning_curves(const EpitaxialStack& stack, const TuningConfig& cfg = {},
                              const ProfileConfig& profile = {});

// Closed-form pump tilt at which `process` emits exactly (lambda_s, lambda_i).
double process_angle_deg(const ModeDispersion& te, const ModeDispersion& tm, PairProcess process,
                         double lambda_s_nm, double lambda_i_nm, double lambda_p_nm);

// Signal-frequency shift omega_hv - omega_vh between the two generation
// channels at each scanned angle present in both curves: the birefringent
// splitting. Pairs of (theta_deg, delta_omega_rad_s).
std::vector<std::pair<double, double>> branch_splitting_rad_s(const TuningCurvePair& curves);

// --- joint spectral amplitude ---------------------------------------------------

struct JsaConfig {
  std::vector<double> pump_angles_deg;  // coherent sum over these tilts
  double pump_bandwidth_ghz = 1.0;      // FWHM of the pump intensity spectrum
  double interaction_length_mm = 1.0;
  double lambda_p_nm = 0.0;  // center of the pump envelope
};

// Both axes share one step so energy-conserving pairs (omega1 + omega2 =
// const) land on exact grid anti-diagonals; the centers are chosen summing to
// the pump frequency for the same reason.
struct JsaGridSpec {
  double omega1_center_rad_s = 0.0;
  double omega2_center_rad_s = 0.0;
  double domega_rad_s = 0.0;
  int n1 = 129;
  int n2 = 129;
};

struct JointSpectralAmplitude {
  std::vector<double> omega1_rad_s, omega2_rad_s;         // uniform, ascending
  std::vector<std::complex<double>> phi_hv, phi_vh;       // [i1 * n2 + i2]
  JsaConfig config;

  std::size_t index(std::size_t i1, std::size_t i2) const { return i1 * omega2_rad_s.size() + i2; }
  double domega1() const { return omega1_rad_s[1] - omega1_rad_s[0]; }
  double domega2() const { return omega2_rad_s[1] - omega2_rad_s[0]; }
};

// Grid sized from the matched emission points of every (process, angle)
// combination, padded by lobe_margin phase-matching main-lobe widths.
JsaGridSpec auto_jsa_grid(const ModeDispersion& te, const ModeDispersion& tm,
                          const JsaConfig& cfg, int n_per_axis = 129, double lobe_margin = 1.5);

// phi(omega1, omega2) = sum over pump angles of alpha(omega1 + omega2) *
// sinc((L/2) dbeta) per process, normalized so the two channels' intensities
// integrate to one jointly. Throws ResolutionError when the grid puts fewer
// than 8 points across the phase-matching main lobe.
JointSpectralAmplitude jsa(const ModeDispersion& te, const ModeDispersion& tm,
                           const JsaConfig& cfg, const JsaGridSpec& grid);

// sum of both channel intensities times the grid measure
double jsa_norm(const JointSpectralAmplitude& state);

struct WavelengthWindow {
  double lo_nm = 0.0;
  double hi_nm = 0.0;
};

struct FilterResult {
  JointSpectralAmplitude state;
  double kept_fraction = 0.0;  // heralding efficiency of the window pair
};

// Zeroes amplitudes outside the window product and renormalizes. Throws
// FilterError for an empty window or one that removes all support.
FilterResult filter_jsa(const JointSpectralAmplitude& state, const WavelengthWindow& signal,
                        const WavelengthWindow& idler);

enum class JsaAxis { signal, idler };

struct MarginalSpectrum {
  std::vector<double> omega_rad_s, lambda_nm, density;  // unit area in omega
};

MarginalSpectrum marginal(const JointSpectralAmplitude& state, JsaAxis axis);

// --- polarization / ion-photon states -------------------------------------------

struct BiphotonPolarizationState {
  std::complex<double> c_hv{}, c_vh{};  // channel amplitudes, |c_hv|^2 + |c_vh|^2 = 1
  std::complex<double> overlap{};       // <phi_vh|phi_hv> over unit-norm channels
  double purity = 0.0;                  // Tr rho^2 after tracing the spectra
  double concurrence = 0.0;             // 2 |c_hv c_vh overlap|
};

BiphotonPolarizationState polarization_state(const JointSpectralAmplitude& state);

struct IonPhotonState {
  double amplitude_sigma_minus = 0.0;
  double amplitude_sigma_plus = 0.0;
  std::string level_sigma_minus = "D3/2 m=-3/2";
  std::string level_sigma_plus = "D3/2 m=+1/2";
};

// validates |a|^2 + |b|^2 = 1 within 1e-9 unless renormalize is set
IonPhotonState make_ion_photon_state(double amp_minus, double amp_plus, bool renormalize = false);

// the spontaneous-decay amplitudes sqrt(3)/2 and 1/2 fixed by the transition's
// Clebsch-Gordan coefficients
IonPhotonState clebsch_gordan_ion_state();

double ion_photon_concurrence(const IonPhotonState& state);  // 2 |a b|

// --- rate ledger -----------------------------------------------------------------

enum class FactorKind {
  rate,         // exactly one per ledger, Hz
  probability,  // in [0, 1]
  gain,         // dimensionless multiplier >= 0
  divisor,      // divides the rate, > 0
  note          // recorded but not multiplied
};

struct RateFactor {
  std::string name;
  double value = 0.0;
  std::string unit;
  std::string note;  // provenance
  FactorKind kind = FactorKind::probability;
};

struct RateLedger {
  std::vector<RateFactor> factors;
  // published figure quoted for context; when set, the budget carries a
  // caveat that the combination model here is this toolkit's own
  std::string benchmark;
};

void validate_ledger(const RateLedger& ledger);

struct RateBudgetLine {
  std::string name;
  double value = 0.0;
  std::string unit;
  double log10_multiplier = 0.0;  // 0 for notes
  std::string note;
};

struct RateBudget {
  double rate_hz = 0.0;
  std::vector<RateBudgetLine> lines;
  std::string benchmark;
  bool caveat = false;
};

// rate = attempt rate x product(probabilities) x product(gains) /
// product(divisors); factors are folded in a canonical order so any
// permutation of the ledger yields bit-identical results
RateBudget rate_budget(const RateLedger& ledger);

std::string render_rate_report(const RateBudget& budget);

// Sr+ interface parameter set: 1 MHz attempts, branching 0.056 into the
// 1092 nm decay, NA-0.6 free-space collection, 70% fiber coupling, a nominal
// 1e-3 pairs per pump pulse, spectral mismatch divisor 50, and a linear-optics
// swap success of 1/2; the 50 ns detection window is bookkeeping only.
RateLedger reference_rate_ledger();

// --- exports ---------------------------------------------------------------------

// process,theta_deg,lambda_signal_nm,lambda_idler_nm rows; gap angles as
// trailing comment lines
std::string tuning_to_csv(const TuningCurvePair& curves);

// intensity grid |phi_hv|^2 + |phi_vh|^2: omega1 header row, omega2 header
// column
std::string jsi_to_csv(const JointSpectralAmplitude& state);

std::string marginal_to_csv(const MarginalSpectrum& spectrum);

}  // namespace nlwg
