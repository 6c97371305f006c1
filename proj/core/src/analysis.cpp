#include "nlwg/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>

#include "nlwg/design.hpp"
#include "nlwg/parallel.hpp"

namespace nlwg {

std::string to_string(PairProcess p) {
  return p == PairProcess::hv ? "hv" : "vh";
}

Polarization signal_polarization(PairProcess p) {
  return p == PairProcess::hv ? Polarization::te : Polarization::tm;
}

Polarization idler_polarization(PairProcess p) {
  return p == PairProcess::hv ? Polarization::tm : Polarization::te;
}

// --- ModeDispersion --------------------------------------------------------------

ModeDispersion ModeDispersion::solve(const EpitaxialStack& stack, Polarization pol,
                                     double lambda_lo_nm, double lambda_hi_nm, int n_samples,
                                     const ProfileConfig& cfg) {
  if (!(lambda_lo_nm > 0.0) || !(lambda_hi_nm > lambda_lo_nm))
    throw ValidationError("dispersion window must satisfy 0 < lo < hi");
  if (n_samples < 4) throw ValidationError("dispersion table needs at least 4 samples");
  validate_stack(stack, false);

  const std::vector<FlatLayer> layers = flatten(stack);
  FlatStackT<double> fs;
  fs.substrate_al = stack.groups.front().sublayers.front().al_fraction;
  for (const FlatLayer& lay : layers) {
    fs.thickness_nm.push_back(lay.thickness_nm);
    fs.al_fraction.push_back(lay.al_fraction);
    fs.role.push_back(lay.role);
  }
  const Grid grid = make_grid(total_thickness(stack), cfg, 1.0);
  const SmoothedGeometry<double> geo(grid, cfg.substrate_pad_nm,
                                     std::span<const double>(fs.thickness_nm),
                                     cfg.smoothing_width_nm);
  const RegionMap rg = compute_regions(layers, cfg.substrate_pad_nm);

  ModeDispersion d;
  d.pol_ = pol;
  d.x_.resize(static_cast<std::size_t>(n_samples));
  d.y_.resize(static_cast<std::size_t>(n_samples));
  for (int k = 0; k < n_samples; ++k)
    d.x_[static_cast<std::size_t>(k)] =
        lambda_lo_nm + (lambda_hi_nm - lambda_lo_nm) * k / (n_samples - 1);
  parallel_for(static_cast<std::size_t>(n_samples), [&](std::size_t k) {
    const IndexProfile p = build_index_profile_t<double>(
        fs, d.x_[k], geo, cfg.smoothing_width_nm, SubstrateFill::clamp, cfg.dispersion);
    const std::vector<GuidedMode> modes = solve_modes(p, pol, 3);
    if (modes.empty())
      throw NumericalError("no bound " + to_string(pol) + " mode at " + std::to_string(d.x_[k]) +
                           " nm; shrink the dispersion window");
    d.y_[k] = modes[select_fundamental(modes, grid, rg.core_x0, rg.core_x1)].n_eff;
  });
  d.build_spline();
  return d;
}

ModeDispersion ModeDispersion::from_table(Polarization pol, std::vector<double> lambda_nm,
                                          std::vector<double> n_eff) {
  if (lambda_nm.size() != n_eff.size() || lambda_nm.size() < 4)
    throw ShapeError("dispersion table needs matching arrays of at least 4 knots");
  ModeDispersion d;
  d.pol_ = pol;
  d.x_ = std::move(lambda_nm);
  d.y_ = std::move(n_eff);
  d.build_spline();
  return d;
}

// natural cubic spline: tridiagonal solve for the knot second derivatives
void ModeDispersion::build_spline() {
  const std::size_t n = x_.size();
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(x_[i + 1] > x_[i]))
      throw ValidationError("dispersion knots must be strictly increasing in wavelength");
  m_.assign(n, 0.0);
  std::vector<double> diag(n, 0.0), rhs(n, 0.0), upper(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hl = x_[i] - x_[i - 1];
    const double hr = x_[i + 1] - x_[i];
    diag[i] = 2.0 * (hl + hr);
    upper[i] = hr;
    rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / hr - (y_[i] - y_[i - 1]) / hl);
  }
  for (std::size_t i = 2; i + 1 < n; ++i) {
    const double w = (x_[i] - x_[i - 1]) / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  for (std::size_t i = n - 2; i >= 1; --i) {
    m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
    if (i == 1) break;
  }
}

std::size_t ModeDispersion::segment(double lambda_nm) const {
  const double slack = 1e-9 * (x_.back() - x_.front());
  if (lambda_nm < x_.front() - slack || lambda_nm > x_.back() + slack)
    throw RangeError("wavelength " + std::to_string(lambda_nm) +
                     " nm outside the dispersion table [" + std::to_string(x_.front()) + ", " +
                     std::to_string(x_.back()) + "]");
  const auto it = std::upper_bound(x_.begin(), x_.end(), lambda_nm);
  const std::size_t hi = static_cast<std::size_t>(std::distance(x_.begin(), it));
  return std::clamp<std::size_t>(hi, 1, x_.size() - 1) - 1;
}

double ModeDispersion::n_eff(double lambda_nm) const {
  const std::size_t i = segment(lambda_nm);
  const double h = x_[i + 1] - x_[i];
  const double t = lambda_nm - x_[i];
  const double b = (y_[i + 1] - y_[i]) / h - h * (2.0 * m_[i] + m_[i + 1]) / 6.0;
  return y_[i] + t * (b + t * (0.5 * m_[i] + t * (m_[i + 1] - m_[i]) / (6.0 * h)));
}

double ModeDispersion::group_index(double lambda_nm) const {
  const std::size_t i = segment(lambda_nm);
  const double h = x_[i + 1] - x_[i];
  const double t = lambda_nm - x_[i];
  const double b = (y_[i + 1] - y_[i]) / h - h * (2.0 * m_[i] + m_[i + 1]) / 6.0;
  const double dndl = b + t * (m_[i] + t * 0.5 * (m_[i + 1] - m_[i]) / h);
  return n_eff(lambda_nm) - lambda_nm * dndl;
}

// --- tuning curves ---------------------------------------------------------------

namespace {

double idler_lambda(double lambda_p_nm, double lambda_s_nm) {
  return 1.0 / (1.0 / lambda_p_nm - 1.0 / lambda_s_nm);
}

}  // namespace

std::optional<TuningSample> tuning_point(const ModeDispersion& te, const ModeDispersion& tm,
                                         PairProcess process, double lambda_p_nm, double theta_deg,
                                         double signal_lo_nm, double signal_hi_nm) {
  if (!(lambda_p_nm > 0.0)) throw ValidationError("pump wavelength must be positive");
  if (!(theta_deg >= 0.0 && theta_deg < 90.0))
    throw RangeError("pump incidence angle must lie in [0, 90) degrees");
  const ModeDispersion& ds = signal_polarization(process) == Polarization::te ? te : tm;
  const ModeDispersion& di = signal_polarization(process) == Polarization::te ? tm : te;

  // widest signal window both tables can serve along the energy-conservation
  // line, kept below degeneracy so the signal is the forward short-wave photon
  double lo = ds.lambda_lo_nm();
  double hi = std::min(ds.lambda_hi_nm(), 2.0 * lambda_p_nm * (1.0 - 1e-9));
  if (di.lambda_hi_nm() > lambda_p_nm)
    lo = std::max(lo, idler_lambda(lambda_p_nm, di.lambda_hi_nm()));
  const double inv_lo_bound = 1.0 / lambda_p_nm - 1.0 / di.lambda_lo_nm();
  if (inv_lo_bound > 0.0) hi = std::min(hi, 1.0 / inv_lo_bound);
  if (signal_lo_nm > 0.0) lo = std::max(lo, signal_lo_nm);
  if (signal_hi_nm > 0.0) hi = std::min(hi, signal_hi_nm);
  if (!(lo < hi) || lo <= lambda_p_nm) return std::nullopt;

  const double target = std::sin(theta_deg * (M_PI / 180.0)) / lambda_p_nm;
  const auto mismatch = [&](double ls) {
    const double li = idler_lambda(lambda_p_nm, ls);
    return ds.n_eff(ls) / ls - di.n_eff(li) / li - target;
  };
  double flo = mismatch(lo), fhi = mismatch(hi);
  if (!std::isfinite(flo) || !std::isfinite(fhi) || (flo > 0.0) == (fhi > 0.0))
    return std::nullopt;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = mismatch(mid);
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  const double ls = 0.5 * (lo + hi);
  return TuningSample{theta_deg, ls, idler_lambda(lambda_p_nm, ls)};
}

TuningCurvePair tuning_curves(const ModeDispersion& te, const ModeDispersion& tm,
                              double lambda_p_nm, const TuningConfig& cfg) {
  if (!(cfg.theta_hi_deg > cfg.theta_lo_deg) || cfg.n_points < 2)
    throw ValidationError("tuning scan needs theta_hi > theta_lo and at least 2 points");
  TuningCurvePair out;
  out.lambda_p_nm = lambda_p_nm;
  out.hv.process = PairProcess::hv;
  out.vh.process = PairProcess::vh;
  for (int k = 0; k < cfg.n_points; ++k) {
    const double theta =
        cfg.theta_lo_deg + (cfg.theta_hi_deg - cfg.theta_lo_deg) * k / (cfg.n_points - 1);
    for (TuningCurve* curve : {&out.hv, &out.vh}) {
      const auto s = tuning_point(te, tm, curve->process, lambda_p_nm, theta, cfg.signal_lo_nm,
                                  cfg.signal_hi_nm);
      if (s)
        curve->samples.push_back(*s);
      else
        curve->gap_theta_deg.push_back(theta);
    }
  }
  return out;
}

TuningCurvePair tuning_curves(const EpitaxialStack& stack, const TuningConfig& cfg,
                              const ProfileConfig& profile) {
  const double lambda_p =
      pump_wavelength(stack.design_wavelengths.te_nm, stack.design_wavelengths.tm_nm);
  // table window: the signal band (2% around the design signal unless the
  // caller pinned one) through to the conjugate idler band, with spline
  // headroom at both edges
  double sig_lo = cfg.signal_lo_nm > 0.0 ? cfg.signal_lo_nm
                                         : stack.design_wavelengths.te_nm * 0.98;
  double sig_hi = cfg.signal_hi_nm > 0.0 ? cfg.signal_hi_nm
                                         : stack.design_wavelengths.te_nm * 1.02;
  if (!(sig_lo > lambda_p && sig_hi > sig_lo))
    throw ValidationError("signal window must sit above the pump wavelength");
  const double lo_t = sig_lo * 0.995;
  const double hi_t = idler_lambda(lambda_p, sig_lo) * 1.005;
  const ModeDispersion te = ModeDispersion::solve(stack, Polarization::te, lo_t, hi_t, 16, profile);
  const ModeDispersion tm = ModeDispersion::solve(stack, Polarization::tm, lo_t, hi_t, 16, profile);
  TuningConfig limited = cfg;
  limited.signal_lo_nm = sig_lo;
  limited.signal_hi_nm = sig_hi;
  return tuning_curves(te, tm, lambda_p, limited);
}

double process_angle_deg(const ModeDispersion& te, const ModeDispersion& tm, PairProcess process,
                         double lambda_s_nm, double lambda_i_nm, double lambda_p_nm) {
  const ModeDispersion& ds = signal_polarization(process) == Polarization::te ? te : tm;
  const ModeDispersion& di = signal_polarization(process) == Polarization::te ? tm : te;
  return phase_matching_angle(ds.n_eff(lambda_s_nm), di.n_eff(lambda_i_nm), lambda_s_nm,
                              lambda_i_nm, lambda_p_nm);
}

std::vector<std::pair<double, double>> branch_splitting_rad_s(const TuningCurvePair& curves) {
  std::vector<std::pair<double, double>> out;
  std::size_t j = 0;
  for (const TuningSample& a : curves.hv.samples) {
    while (j < curves.vh.samples.size() && curves.vh.samples[j].theta_deg < a.theta_deg - 1e-12)
      ++j;
    if (j == curves.vh.samples.size()) break;
    const TuningSample& b = curves.vh.samples[j];
    if (std::abs(b.theta_deg - a.theta_deg) > 1e-12) continue;
    out.emplace_back(a.theta_deg, angular_frequency_rad_s(a.lambda_signal_nm) -
                                      angular_frequency_rad_s(b.lambda_signal_nm));
  }
  return out;
}

// --- joint spectral amplitude ----------------------------------------------------

namespace {

double sinc(double x) {
  return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
}

void check_jsa_config(const JsaConfig& cfg) {
  if (!(cfg.lambda_p_nm > 0.0)) throw ValidationError("pump center wavelength must be positive");
  if (!(cfg.pump_bandwidth_ghz > 0.0)) throw ValidationError("pump bandwidth must be positive");
  if (!(cfg.interaction_length_mm > 0.0))
    throw ValidationError("interaction length must be positive");
  if (cfg.pump_angles_deg.empty()) throw ValidationError("at least one pump angle is required");
  for (double a : cfg.pump_angles_deg)
    if (!(a >= 0.0 && a < 90.0)) throw RangeError("pump angles must lie in [0, 90) degrees");
}

std::vector<double> uniform_grid(double center, double step, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  const double start = center - 0.5 * step * (n - 1);
  for (int k = 0; k < n; ++k) g[static_cast<std::size_t>(k)] = start + step * k;
  return g;
}

}  // namespace

JsaGridSpec auto_jsa_grid(const ModeDispersion& te, const ModeDispersion& tm,
                          const JsaConfig& cfg, int n_per_axis, double lobe_margin) {
  check_jsa_config(cfg);
  if (n_per_axis < 16) throw ValidationError("jsa grid needs at least 16 points per axis");
  const double omega_p = angular_frequency_rad_s(cfg.lambda_p_nm);
  double w1_lo = 0.0, w1_hi = 0.0;
  bool first = true;
  for (PairProcess p : {PairProcess::hv, PairProcess::vh})
    for (double theta : cfg.pump_angles_deg) {
      const auto s = tuning_point(te, tm, p, cfg.lambda_p_nm, theta);
      if (!s)
        throw NumericalError("no phase-matched emission for process " + to_string(p) + " at " +
                             std::to_string(theta) + " deg within the dispersion tables");
      const double w = angular_frequency_rad_s(s->lambda_signal_nm);
      w1_lo = first ? w : std::min(w1_lo, w);
      w1_hi = first ? w : std::max(w1_hi, w);
      first = false;
    }
  JsaGridSpec spec;
  spec.omega1_center_rad_s = 0.5 * (w1_lo + w1_hi);
  spec.omega2_center_rad_s = omega_p - spec.omega1_center_rad_s;
  const double l_nm = cfg.interaction_length_mm * 1e6;
  // the phase-matching main lobe measured along the energy-conservation line,
  // where both factors sweep together; the widest process sets the pad
  double lobe = 0.0;
  for (PairProcess p : {PairProcess::hv, PairProcess::vh}) {
    const ModeDispersion& ds = signal_polarization(p) == Polarization::te ? te : tm;
    const ModeDispersion& di = signal_polarization(p) == Polarization::te ? tm : te;
    const double ng = ds.group_index(wavelength_from_omega_nm(spec.omega1_center_rad_s)) +
                      di.group_index(wavelength_from_omega_nm(spec.omega2_center_rad_s));
    lobe = std::max(lobe, 4.0 * M_PI * kSpeedOfLightNmPerS / (l_nm * std::max(ng, 1e-9)));
  }
  const double halfspan = 0.5 * (w1_hi - w1_lo) + lobe_margin * lobe;
  spec.domega_rad_s = 2.0 * halfspan / (n_per_axis - 1);
  spec.n1 = spec.n2 = n_per_axis;
  return spec;
}

JointSpectralAmplitude jsa(const ModeDispersion& te, const ModeDispersion& tm,
                           const JsaConfig& cfg, const JsaGridSpec& grid) {
  check_jsa_config(cfg);
  if (grid.n1 < 2 || grid.n2 < 2 || !(grid.domega_rad_s > 0.0))
    throw ValidationError("jsa grid needs at least 2 points per axis and a positive step");

  JointSpectralAmplitude out;
  out.config = cfg;
  out.omega1_rad_s = uniform_grid(grid.omega1_center_rad_s, grid.domega_rad_s, grid.n1);
  out.omega2_rad_s = uniform_grid(grid.omega2_center_rad_s, grid.domega_rad_s, grid.n2);
  const std::size_t n1 = out.omega1_rad_s.size(), n2 = out.omega2_rad_s.size();
  out.phi_hv.assign(n1 * n2, {});
  out.phi_vh.assign(n1 * n2, {});

  const double c = kSpeedOfLightNmPerS;
  const double l_nm = cfg.interaction_length_mm * 1e6;
  const double omega_p = angular_frequency_rad_s(cfg.lambda_p_nm);
  // bandwidth is the FWHM of the pump intensity spectrum; alpha is the
  // amplitude envelope
  const double dw_fwhm = 2.0 * M_PI * cfg.pump_bandwidth_ghz * 1e9;
  const double alpha_coef = 2.0 * M_LN2 / (dw_fwhm * dw_fwhm);

  std::vector<double> sines;
  for (double a : cfg.pump_angles_deg) sines.push_back(std::sin(a * (M_PI / 180.0)));

  for (PairProcess p : {PairProcess::hv, PairProcess::vh}) {
    const ModeDispersion& ds = signal_polarization(p) == Polarization::te ? te : tm;
    const ModeDispersion& di = signal_polarization(p) == Polarization::te ? tm : te;
    std::vector<double> ns(n1), ni(n2);
    for (std::size_t i = 0; i < n1; ++i)
      ns[i] = ds.n_eff(wavelength_from_omega_nm(out.omega1_rad_s[i]));
    for (std::size_t j = 0; j < n2; ++j)
      ni[j] = di.n_eff(wavelength_from_omega_nm(out.omega2_rad_s[j]));

    // fewer than 8 grid points across the phase-matching main lobe leaves the
    // sinc aliased: reject the grid
    const double ngs = ds.group_index(wavelength_from_omega_nm(grid.omega1_center_rad_s));
    const double ngi = di.group_index(wavelength_from_omega_nm(grid.omega2_center_rad_s));
    for (double s : sines) {
      const double w1 = 4.0 * M_PI * c / (l_nm * std::max(ngs - s, 1e-9));
      const double w2 = 4.0 * M_PI * c / (l_nm * std::max(ngi + s, 1e-9));
      if (8.0 * grid.domega_rad_s > std::min(w1, w2))
        throw ResolutionError("jsa grid resolves the phase-matching main lobe with fewer than 8 "
                              "points; refine domega below " +
                              std::to_string(std::min(w1, w2) / 8.0) + " rad/s");
    }

    std::vector<std::complex<double>>& phi = p == PairProcess::hv ? out.phi_hv : out.phi_vh;
    parallel_for(n1, [&](std::size_t i) {
      const double bs = ns[i] * out.omega1_rad_s[i] / c;
      for (std::size_t j = 0; j < n2; ++j) {
        const double wsum = out.omega1_rad_s[i] + out.omega2_rad_s[j];
        double pm = 0.0;
        for (double s : sines)
          pm += sinc(0.5 * l_nm * (bs - ni[j] * out.omega2_rad_s[j] / c - wsum * s / c));
        const double d = wsum - omega_p;
        phi[i * n2 + j] = std::exp(-alpha_coef * d * d) * pm;
      }
    });
  }

  const double norm = jsa_norm(out);
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw DomainError("joint amplitude has no support on the grid; recenter it on the pump");
  const double scale = 1.0 / std::sqrt(norm);
  for (auto& v : out.phi_hv) v *= scale;
  for (auto& v : out.phi_vh) v *= scale;
  return out;
}

double jsa_norm(const JointSpectralAmplitude& state) {
  double acc = 0.0;
  for (const auto& v : state.phi_hv) acc += std::norm(v);
  for (const auto& v : state.phi_vh) acc += std::norm(v);
  return acc * state.domega1() * state.domega2();
}

FilterResult filter_jsa(const JointSpectralAmplitude& state, const WavelengthWindow& signal,
                        const WavelengthWindow& idler) {
  if (!(signal.lo_nm < signal.hi_nm) || !(idler.lo_nm < idler.hi_nm))
    throw FilterError("filter window is empty");
  const std::size_t n1 = state.omega1_rad_s.size(), n2 = state.omega2_rad_s.size();
  std::vector<char> keep1(n1), keep2(n2);
  std::size_t c1 = 0, c2 = 0;
  for (std::size_t i = 0; i < n1; ++i) {
    const double l = wavelength_from_omega_nm(state.omega1_rad_s[i]);
    keep1[i] = l >= signal.lo_nm && l <= signal.hi_nm;
    c1 += keep1[i];
  }
  for (std::size_t j = 0; j < n2; ++j) {
    const double l = wavelength_from_omega_nm(state.omega2_rad_s[j]);
    keep2[j] = l >= idler.lo_nm && l <= idler.hi_nm;
    c2 += keep2[j];
  }
  if (c1 == 0 || c2 == 0) throw FilterError("filter window excludes the whole grid");

  FilterResult out;
  out.state = state;
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      if (!keep1[i] || !keep2[j]) {
        out.state.phi_hv[i * n2 + j] = 0.0;
        out.state.phi_vh[i * n2 + j] = 0.0;
      }
  const double before = jsa_norm(state);
  const double after = jsa_norm(out.state);
  if (!(after > 0.0)) throw FilterError("filter window removes all spectral support");
  out.kept_fraction = after / before;
  const double scale = 1.0 / std::sqrt(after);
  for (auto& v : out.state.phi_hv) v *= scale;
  for (auto& v : out.state.phi_vh) v *= scale;
  return out;
}

MarginalSpectrum marginal(const JointSpectralAmplitude& state, JsaAxis axis) {
  const std::size_t n1 = state.omega1_rad_s.size(), n2 = state.omega2_rad_s.size();
  MarginalSpectrum out;
  if (axis == JsaAxis::signal) {
    out.omega_rad_s = state.omega1_rad_s;
    out.density.assign(n1, 0.0);
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        out.density[i] +=
            std::norm(state.phi_hv[i * n2 + j]) + std::norm(state.phi_vh[i * n2 + j]);
    for (double& v : out.density) v *= state.domega2();
  } else {
    out.omega_rad_s = state.omega2_rad_s;
    out.density.assign(n2, 0.0);
    for (std::size_t j = 0; j < n2; ++j)
      for (std::size_t i = 0; i < n1; ++i)
        out.density[j] +=
            std::norm(state.phi_hv[i * n2 + j]) + std::norm(state.phi_vh[i * n2 + j]);
    for (double& v : out.density) v *= state.domega1();
  }
  const double dw = axis == JsaAxis::signal ? state.domega1() : state.domega2();
  double area = 0.0;
  for (double v : out.density) area += v;
  area *= dw;
  if (!(area > 0.0)) throw DomainError("marginal of a zero-norm joint amplitude");
  for (double& v : out.density) v /= area;
  out.lambda_nm.reserve(out.omega_rad_s.size());
  for (double w : out.omega_rad_s) out.lambda_nm.push_back(wavelength_from_omega_nm(w));
  return out;
}

// --- polarization / ion-photon states --------------------------------------------

BiphotonPolarizationState polarization_state(const JointSpectralAmplitude& state) {
  const double dm = state.domega1() * state.domega2();
  double s_hv = 0.0, s_vh = 0.0;
  std::complex<double> cross{};
  for (std::size_t k = 0; k < state.phi_hv.size(); ++k) {
    s_hv += std::norm(state.phi_hv[k]);
    s_vh += std::norm(state.phi_vh[k]);
    cross += state.phi_hv[k] * std::conj(state.phi_vh[k]);
  }
  s_hv *= dm;
  s_vh *= dm;
  cross *= dm;
  const double total = s_hv + s_vh;
  if (!(total > 0.0)) throw DomainError("polarization state of a zero-norm joint amplitude");

  BiphotonPolarizationState out;
  out.c_hv = std::sqrt(s_hv / total);
  out.c_vh = std::sqrt(s_vh / total);
  if (s_hv > 0.0 && s_vh > 0.0) {
    out.overlap = cross / std::sqrt(s_hv * s_vh);
    const double mag = std::abs(out.overlap);
    if (mag > 1.0) out.overlap /= mag;  // Cauchy-Schwarz up to rounding
  }
  const double a = s_hv / total, b = s_vh / total;
  const double gamma = std::abs(out.c_hv) * std::abs(out.c_vh) * std::abs(out.overlap);
  out.concurrence = 2.0 * gamma;
  out.purity = a * a + b * b + 2.0 * gamma * gamma;
  return out;
}

IonPhotonState make_ion_photon_state(double amp_minus, double amp_plus, bool renormalize) {
  const double nsq = amp_minus * amp_minus + amp_plus * amp_plus;
  if (!(nsq > 0.0)) throw DomainError("ion-photon state needs a nonzero amplitude");
  IonPhotonState s;
  if (renormalize) {
    const double inv = 1.0 / std::sqrt(nsq);
    s.amplitude_sigma_minus = amp_minus * inv;
    s.amplitude_sigma_plus = amp_plus * inv;
  } else {
    if (std::abs(nsq - 1.0) > 1e-9)
      throw ValidationError("ion-photon amplitudes are not normalized; pass renormalize");
    s.amplitude_sigma_minus = amp_minus;
    s.amplitude_sigma_plus = amp_plus;
  }
  return s;
}

IonPhotonState clebsch_gordan_ion_state() {
  IonPhotonState s;
  s.amplitude_sigma_minus = std::sqrt(3.0) / 2.0;
  s.amplitude_sigma_plus = 0.5;
  return s;
}

double ion_photon_concurrence(const IonPhotonState& state) {
  return 2.0 * std::abs(state.amplitude_sigma_minus * state.amplitude_sigma_plus);
}

// --- rate ledger ------------------------------------------------------------------

void validate_ledger(const RateLedger& ledger) {
  int rates = 0;
  for (const RateFactor& f : ledger.factors) {
    switch (f.kind) {
      case FactorKind::rate:
        ++rates;
        if (!(f.value >= 0.0)) throw ValidationError("rate factor " + f.name + " must be >= 0");
        break;
      case FactorKind::probability:
        if (!(f.value >= 0.0 && f.value <= 1.0))
          throw ValidationError("probability factor " + f.name + " must lie in [0, 1]");
        break;
      case FactorKind::gain:
        if (!(f.value >= 0.0)) throw ValidationError("gain factor " + f.name + " must be >= 0");
        break;
      case FactorKind::divisor:
        if (!(f.value > 0.0)) throw ValidationError("divisor factor " + f.name + " must be > 0");
        break;
      case FactorKind::note:
        break;
    }
  }
  if (rates != 1) throw ValidationError("ledger needs exactly one rate factor");
}

RateBudget rate_budget(const RateLedger& ledger) {
  validate_ledger(ledger);
  // canonical fold order: any permutation of the ledger yields identical bits
  std::vector<const RateFactor*> sorted;
  for (const RateFactor& f : ledger.factors)
    if (f.kind != FactorKind::note) sorted.push_back(&f);
  std::sort(sorted.begin(), sorted.end(), [](const RateFactor* a, const RateFactor* b) {
    if (a->name != b->name) return a->name < b->name;
    return a->value < b->value;
  });
  double rate = 1.0;
  for (const RateFactor* f : sorted)
    rate = f->kind == FactorKind::divisor ? rate / f->value : rate * f->value;

  RateBudget out;
  out.rate_hz = rate;
  out.benchmark = ledger.benchmark;
  out.caveat = !ledger.benchmark.empty();
  for (const RateFactor& f : ledger.factors) {
    RateBudgetLine line{f.name, f.value, f.unit, 0.0, f.note};
    if (f.kind != FactorKind::note)
      line.log10_multiplier =
          f.kind == FactorKind::divisor ? -std::log10(f.value) : std::log10(f.value);
    out.lines.push_back(std::move(line));
  }
  return out;
}

std::string render_rate_report(const RateBudget& budget) {
  std::string out = "heralded-rate budget\n";
  char line[512];
  std::snprintf(line, sizeof line, "  %-20s %12s %-6s %8s  %s\n", "factor", "value", "unit",
                "log10", "note");
  out += line;
  for (const RateBudgetLine& l : budget.lines) {
    std::snprintf(line, sizeof line, "  %-20s %12.6g %-6s %+8.3f  %s\n", l.name.c_str(), l.value,
                  l.unit.c_str(), l.log10_multiplier, l.note.c_str());
    out += line;
  }
  std::snprintf(line, sizeof line, "  rate: %.6g events/s (%.3g per minute)\n", budget.rate_hz,
                budget.rate_hz * 60.0);
  out += line;
  if (budget.caveat) {
    out += "  benchmark: " + budget.benchmark + "\n";
    out += "  caveat: the multiplicative model above is this toolkit's own; the benchmark's "
           "combination is not specified by its source\n";
  }
  return out;
}

RateLedger reference_rate_ledger() {
  RateLedger l;
  const double na = 0.6;
  const double solid_angle = 0.5 * (1.0 - std::sqrt(1.0 - na * na));
  l.factors = {
      {"attempt_rate", 1.0e6, "Hz", "synchronous pulsed ion excitation and source pumping",
       FactorKind::rate},
      {"ion_branching", 0.056, "", "P1/2 -> D3/2 decay at 1092 nm in Sr+ "
       "[Likforman et al., Phys. Rev. A 93, 052507 (2016)]",
       FactorKind::probability},
      {"na_collection", solid_angle, "", "free-space NA 0.6: (1 - sqrt(1 - NA^2))/2 of 4pi",
       FactorKind::probability},
      {"fiber_coupling", 0.7, "", "collected mode into single-mode fiber", FactorKind::probability},
      {"pair_emission", 1.0e-3, "", "pairs per pulse in the collected mode; nominal for a "
       "60 mW, 1 MHz pulsed pump",
       FactorKind::probability},
      {"spectral_mismatch", 50.0, "", "source bandwidth against the ion linewidth",
       FactorKind::divisor},
      {"swap_success", 0.5, "", "linear-optics Bell measurement resolves two of four states",
       FactorKind::probability},
      {"detection_window", 50e-9, "s", "coincidence gate; bookkeeping only, folded into "
       "pair_emission",
       FactorKind::note},
  };
  l.benchmark = "order of two events per minute reported for this parameter set";
  return l;
}

// --- exports ----------------------------------------------------------------------

std::string tuning_to_csv(const TuningCurvePair& curves) {
  std::string out = "process,theta_deg,lambda_signal_nm,lambda_idler_nm\n";
  char line[160];
  for (const TuningCurve* c : {&curves.hv, &curves.vh}) {
    for (const TuningSample& s : c->samples) {
      std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%.17g\n", to_string(c->process).c_str(),
                    s.theta_deg, s.lambda_signal_nm, s.lambda_idler_nm);
      out += line;
    }
    for (double g : c->gap_theta_deg) {
      std::snprintf(line, sizeof line, "# gap,%s,%.17g\n", to_string(c->process).c_str(), g);
      out += line;
    }
  }
  return out;
}

std::string jsi_to_csv(const JointSpectralAmplitude& state) {
  const std::size_t n1 = state.omega1_rad_s.size(), n2 = state.omega2_rad_s.size();
  std::string out = "omega2_rad_s\\omega1_rad_s";
  char cell[48];
  for (std::size_t i = 0; i < n1; ++i) {
    std::snprintf(cell, sizeof cell, ",%.17g", state.omega1_rad_s[i]);
    out += cell;
  }
  out += '\n';
  for (std::size_t j = 0; j < n2; ++j) {
    std::snprintf(cell, sizeof cell, "%.17g", state.omega2_rad_s[j]);
    out += cell;
    for (std::size_t i = 0; i < n1; ++i) {
      const std::size_t k = i * n2 + j;
      std::snprintf(cell, sizeof cell, ",%.17g",
                    std::norm(state.phi_hv[k]) + std::norm(state.phi_vh[k]));
      out += cell;
    }
    out += '\n';
  }
  return out;
}

std::string marginal_to_csv(const MarginalSpectrum& spectrum) {
  std::string out = "omega_rad_s,lambda_nm,density\n";
  char line[120];
  for (std::size_t k = 0; k < spectrum.omega_rad_s.size(); ++k) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", spectrum.omega_rad_s[k],
                  spectrum.lambda_nm[k], spectrum.density[k]);
    out += line;
  }
  return out;
}

}  // namespace nlwg
