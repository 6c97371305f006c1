#pragma once

// Inverse-design core: the phase-matching relation, pump energy conservation,
// random initialization of an epitaxial template, the overlap figure of merit
// Gamma = | int chi2(x) E_p(x) E_TE(x) E_TM(x) dx |, and the Adam loop that
// climbs it through the surrogate path with periodic reference audits.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nlwg/ad.hpp"
#include "nlwg/cplx.hpp"
#include "nlwg/errors.hpp"
#include "nlwg/materials.hpp"
#include "nlwg/modes.hpp"
#include "nlwg/optim.hpp"
#include "nlwg/profile.hpp"
#include "nlwg/pump.hpp"
#include "nlwg/stack.hpp"
#include "nlwg/surrogate.hpp"

namespace nlwg {

// 1/lambda_p = 1/lambda_s + 1/lambda_i
double pump_wavelength(double lambda_s_nm, double lambda_i_nm);

// theta = asin(lambda_p (n_TE/lambda_TE - n_TM/lambda_TM)) in degrees: the
// pump tilt at which its longitudinal wavevector bridges the two
// counterpropagating guided modes. sin(theta) = 0 is the collinear edge
// (theta = 0); a negative or >= 1 sine has no real tilt and throws, carrying
// the offending value.
template <class T>
T phase_matching_angle_t(const T& n_te, const T& n_tm, double lambda_te_nm, double lambda_tm_nm,
                         double lambda_p_nm) {
  if (lambda_te_nm <= 0.0 || lambda_tm_nm <= 0.0 || lambda_p_nm <= 0.0)
    throw ValidationError("phase matching requires positive wavelengths");
  using std::asin;
  using ad::asin;
  T rhs = lambda_p_nm * (n_te / lambda_te_nm - n_tm / lambda_tm_nm);
  if (!(val(rhs) >= 0.0) || val(rhs) >= 1.0) throw NoRealAngleError(val(rhs));
  return asin(rhs) * (180.0 / M_PI);
}

inline double phase_matching_angle(double n_te, double n_tm, double lambda_te_nm,
                                   double lambda_tm_nm, double lambda_p_nm) {
  return phase_matching_angle_t<double>(n_te, n_tm, lambda_te_nm, lambda_tm_nm, lambda_p_nm);
}

// Random starting point on a template's role layout: mirror sublayers draw
// U(0.75, 1.25) of their quarter-wave-at-pump thickness, core sublayers the
// same factor of the half-wave thickness, buffers U(50, 200) nm. Compositions
// (the alternating low/high pattern) are taken from the template unchanged;
// the template must keep its core mean Al below the mirror mean.
EpitaxialStack sample_initial_stack(std::uint64_t seed, double lambda_p_nm,
                                    const EpitaxialStack& tmpl);

// (gamma_a / gamma_b)^2: second-order conversion efficiency scales with the
// squared overlap
double efficiency_ratio(double gamma_a_pmV, double gamma_b_pmV);

template <class T>
struct FigureOfMeritT {
  T gamma_abs{};   // pm/V
  T theta_deg{};   // pump tilt the overlap was evaluated at
  std::vector<Cx<T>> components;  // per-sample complex integrand, pm/V per nm
};
using FigureOfMerit = FigureOfMeritT<double>;

// Trapezoidal | int chi2 E_p f_TE E_TM dx | with the complex pump field. The
// guided-mode factors are the unit-power solver fields (TM already divided by
// eps); chi2 in pm/V makes the integral come out in pm/V.
template <class T>
FigureOfMeritT<T> overlap_fom(const PumpFieldT<T>& pump, std::span<const T> te_field,
                              std::span<const T> tm_efield, std::span<const T> chi2_pmV) {
  const std::size_t n = pump.phi_plus.size();
  if (n != static_cast<std::size_t>(pump.grid.count))
    throw ShapeError("pump field is inconsistent with its grid");
  if (te_field.size() != n || tm_efield.size() != n || chi2_pmV.size() != n)
    throw ShapeError("overlap factors are not sampled on the pump grid");
  if (n < 2) throw ShapeError("overlap grid is too short");

  FigureOfMeritT<T> fom;
  fom.theta_deg = pump.theta_deg;
  fom.components.reserve(n);
  std::vector<T> re, im;
  re.reserve(n);
  im.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    T w = chi2_pmV[k] * te_field[k] * tm_efield[k];
    Cx<T> ep = pump.phi_plus[k] + pump.phi_minus[k];
    Cx<T> c(ep.re * w, ep.im * w);
    re.push_back(c.re);
    im.push_back(c.im);
    fom.components.push_back(std::move(c));
  }
  T gr = trapz(pump.grid, std::span<const T>(re.data(), re.size()));
  T gi = trapz(pump.grid, std::span<const T>(im.data(), im.size()));
  using std::sqrt;
  using ad::sqrt;
  fom.gamma_abs = sqrt(gr * gr + gi * gi);
  return fom;
}

// Immutable evaluation context: the parameterization, the shared grid (same
// sizing rule datasets use), the chi2 model, and the three design wavelengths
// (pump recomputed from energy conservation so the angle formula is always
// consistent).
struct DesignProblem {
  DesignSpace space;
  GeneratorConfig gen;
  Chi2Model chi2;
  double lambda_te_nm = 0.0;
  double lambda_tm_nm = 0.0;
  double lambda_p_nm = 0.0;
  Grid grid;

  static DesignProblem create(const DesignSpace& space, const GeneratorConfig& gen,
                              const Chi2Model& chi2 = {});
};

template <class T>
struct DesignEvalT {
  FigureOfMeritT<T> fom;
  T n_te{}, n_tm{};
};

// Surrogate-path FOM, differentiable end to end in the design vector: decode
// to tied flat layers, smooth, predict both modes, derive the matching angle,
// solve the pump at that angle, integrate the overlap.
template <class T>
DesignEvalT<T> evaluate_surrogate_fom(const DesignProblem& pb, const SurrogateModel& te_model,
                                      const SurrogateModel& tm_model, std::span<const T> design) {
  const FlatStackT<T> fs = pb.space.decode_flat<T>(design);
  const SmoothedGeometry<T> geo(pb.grid, pb.gen.profile.substrate_pad_nm,
                                std::span<const T>(fs.thickness_nm),
                                pb.gen.profile.smoothing_width_nm);
  const double w = pb.gen.profile.smoothing_width_nm;
  const DispersionModelId disp = pb.gen.profile.dispersion;
  const ProfileT<T> p_te =
      build_index_profile_t<T>(fs, pb.lambda_te_nm, geo, w, SubstrateFill::clamp, disp);
  const ProfileT<T> p_tm =
      build_index_profile_t<T>(fs, pb.lambda_tm_nm, geo, w, SubstrateFill::clamp, disp);
  const ProfileT<T> p_pp =
      build_index_profile_t<T>(fs, pb.lambda_p_nm, geo, w, SubstrateFill::physical, disp);

  const PredictionT<T> q_te = predict_profile(te_model, p_te);
  const PredictionT<T> q_tm = predict_profile(tm_model, p_tm);

  DesignEvalT<T> ev;
  ev.n_te = q_te.n_eff;
  ev.n_tm = q_tm.n_eff;
  T theta = phase_matching_angle_t(ev.n_te, ev.n_tm, pb.lambda_te_nm, pb.lambda_tm_nm,
                                   pb.lambda_p_nm);
  const PumpFieldT<T> pump = pump_field_t(p_pp, theta);

  const std::vector<T> chi2 = build_chi2_samples(fs, geo, pb.chi2);
  std::vector<T> e_tm;
  e_tm.reserve(q_tm.field.size());
  for (std::size_t k = 0; k < q_tm.field.size(); ++k)
    e_tm.push_back(q_tm.field[k] / (p_tm.n[k] * p_tm.n[k]));

  ev.fom = overlap_fom<T>(pump, std::span<const T>(q_te.field.data(), q_te.field.size()),
                          std::span<const T>(e_tm.data(), e_tm.size()),
                          std::span<const T>(chi2.data(), chi2.size()));
  return ev;
}

struct ReferenceEval {
  FigureOfMerit fom;  // zeroed when not evaluable
  double n_te = 0.0, n_tm = 0.0;
  bool evaluable = false;  // false: no guided mode at one wavelength, or no real angle
};

// Reference-path FOM: full mode solves plus the pump TMM on the same design.
ReferenceEval evaluate_reference_fom(const DesignProblem& pb, std::span<const double> design);

struct AuditReport {
  double fom_surrogate_pmV = 0.0;
  double fom_reference_pmV = 0.0;
  double rel_discrepancy = 0.0;  // |s - r| / max(r, 1e-12)
  bool indeterminate = false;    // reference below 1e-12 pm/V (or not evaluable)
};

AuditReport audit_discrepancy(const DesignProblem& pb, const SurrogateModel& te_model,
                              const SurrogateModel& tm_model, std::span<const double> design);

struct OptimizerState {
  std::vector<double> design;  // unconstrained (squashed) coordinates
  AdamState adam;              // first/second moments, step count
  int iteration = 0;
  AdamConfig hyper;
  std::uint64_t seed = 0;

  OptimizerState(std::vector<double> design_, const AdamConfig& hyper_, std::uint64_t seed_)
      : design(std::move(design_)), adam(design.size()), hyper(hyper_), seed(seed_) {}
};

struct TrajectoryRecord {
  int iter = 0;
  double fom_surrogate_pmV = 0.0;
  double fom_reference_pmV = std::numeric_limits<double>::quiet_NaN();  // audited rows only
  double rel_discrepancy = std::numeric_limits<double>::quiet_NaN();
  double theta_deg = std::numeric_limits<double>::quiet_NaN();
  double n_te = 0.0, n_tm = 0.0;  // surrogate effective indices behind theta
  int model_version = 0;
  std::uint64_t design_hash = 0;
  bool audited = false;
  bool skipped = false;  // no-real-angle iteration: zero-FOM penalty row, no step
};

struct OptimizeConfig {
  AdamConfig adam{5.0e-4, 0.9, 0.999, 1e-8};
  int max_iters = 300;
  int audit_every = 10;
  int fine_tune_every = 25;         // periodic re-anchor cadence
  double fine_tune_trigger = 0.02;  // audit discrepancy that forces one immediately
  int fine_tune_window = 4;         // most recent designs fed to the re-anchor
  // pre-loop anchoring at the initial design, budgeted in units of
  // fine_tune.epochs_budget; 0 disables
  int warmup_rounds = 4;
  FineTuneConfig fine_tune{};
  int plateau_window = 50;       // consecutive sub-tolerance improvements that stop the run
  double plateau_rel_tol = 1e-3;
  std::uint64_t seed = 0;
};

// one fine-tune event inside optimize(): the iteration it ran at and what the
// tuner reported for each polarization
struct TuneEvent {
  int iter = 0;
  double te_mse = 0.0;
  int te_epochs = 0;
  double tm_mse = 0.0;
  int tm_epochs = 0;
};

struct OptimizeResult {
  std::vector<TrajectoryRecord> trajectory;
  OptimizerState state;             // final state; last valid state when aborted
  std::vector<double> best_design;  // argmax of the audited reference FOMs
  EpitaxialStack best_stack;
  double best_reference_fom_pmV = 0.0;
  double initial_reference_fom_pmV = 0.0;
  // designs as evaluated at iteration 0, the midpoint, and the resting point;
  // the gradient-audit anchors
  std::vector<std::vector<double>> checkpoints;
  std::vector<TuneEvent> tune_events;
  bool aborted = false;
  std::string abort_reason;
};

// Adam ascent on the surrogate FOM (applied to -|Gamma| in minimization
// form). Audits every audit_every iterations plus the final design. Cadence
// fine-tunes anchor the models on the recent-design window before that
// iteration's gradient and audit, so audited rows measure the refreshed
// models; an audit that still exceeds the trigger reruns the tuner and, when
// that changes the weights, the value, angle, and audit are recomputed. Stops
// at max_iters or after plateau_window consecutive relative improvements
// below plateau_rel_tol.
OptimizeResult optimize(const EpitaxialStack& initial, SurrogateModel& te_model,
                        SurrogateModel& tm_model, const DesignProblem& pb,
                        const OptimizeConfig& cfg = {});

// iter, fom_surrogate_pmV, fom_reference_pmV, rel_discrepancy, theta_deg,
// model_version, design_hash; non-audited reference columns are nan
std::string trajectory_to_csv(std::span<const TrajectoryRecord> records);

}  // namespace nlwg
