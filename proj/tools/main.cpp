// nlwg command-line driver: dataset generation, surrogate training and
// fine-tuning, design optimization, and biphoton analysis as reproducible
// batch runs. Every command resolves its parameters from an optional JSON
// config file plus flag overrides, writes the resolved set back into the
// output directory, and keeps wall-clock time out of every artifact except
// the run_meta.json sidecar.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlwg/analysis.hpp>
#include <nlwg/design.hpp>
#include <nlwg/errors.hpp>
#include <nlwg/report.hpp>
#include <nlwg/stack.hpp>
#include <nlwg/surrogate.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace nlwg;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw UsageError("config " + path + ": " + std::string(e.what()));
  }
}

json section(const json& cfg, const char* name) {
  if (!cfg.contains(name)) return json::object();
  if (!cfg.at(name).is_object()) throw UsageError(std::string("config section '") + name +
                                                  "' must be a JSON object");
  return cfg.at(name);
}

// the only artifact allowed to carry wall-clock state
void write_run_meta(const fs::path& out, const std::string& command_line) {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  ordered_json meta;
  meta["timestamp_utc"] = stamp;
  meta["command_line"] = command_line;
  write_text(out / "run_meta.json", meta.dump(2) + "\n");
}

fs::path prepare_out(const std::string& out) {
  fs::path p(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error("cannot create output directory " + out + ": " + ec.message());
  return p;
}

EpitaxialStack load_stack_arg(const std::string& path) {
  if (path.empty())
    throw UsageError("a stack file is required (--stack or config key \"stack\")");
  if (!fs::exists(path)) throw UsageError("stack file not found: " + path);
  return load_stack_file(path);
}

Polarization pol_from_string(const std::string& s) {
  if (s == "te") return Polarization::te;
  if (s == "tm") return Polarization::tm;
  throw UsageError("polarization must be \"te\" or \"tm\", got \"" + s + "\"");
}

GeneratorConfig generator_config(const json& cfg) {
  const json g = section(cfg, "generator");
  GeneratorConfig out;
  out.input_len = g.value("input_len", 512);
  out.grid_headroom = g.value("grid_headroom", 1.35);
  out.val_fraction = g.value("val_fraction", 0.2);
  out.attempt_factor = g.value("attempt_factor", 100);
  out.profile.grid_dx_nm = g.value("grid_dx_nm", 4.0);
  out.profile.smoothing_width_nm = g.value("smoothing_width_nm", 5.0);
  return out;
}

ordered_json generator_json(const GeneratorConfig& g) {
  ordered_json j;
  j["input_len"] = g.input_len;
  j["grid_dx_nm"] = g.profile.grid_dx_nm;
  j["smoothing_width_nm"] = g.profile.smoothing_width_nm;
  j["grid_headroom"] = g.grid_headroom;
  j["val_fraction"] = g.val_fraction;
  j["attempt_factor"] = g.attempt_factor;
  return j;
}

std::string csv_from_history(const TrainHistory& h, int end_epoch) {
  const int start = end_epoch - static_cast<int>(h.train_mse.size()) + 1;
  std::string out = "epoch,train_mse,val_mse\n";
  char line[96];
  for (std::size_t k = 0; k < h.train_mse.size(); ++k) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", start + static_cast<int>(k),
                  h.train_mse[k], h.val_mse[k]);
    out += line;
  }
  return out;
}

// --- dataset --------------------------------------------------------------------

struct DatasetArgs {
  std::string stack, out, pol = "te";
  std::uint64_t seed = 1;
  int n = 96;
  double lambda_nm = 0.0;  // 0: the design wavelength of the polarization
  GeneratorConfig gen;
};

void cmd_dataset(const DatasetArgs& a, const std::string& cmdline) {
  if (a.n <= 0) throw UsageError("dataset size must be positive");
  const Polarization pol = pol_from_string(a.pol);
  const EpitaxialStack tmpl = load_stack_arg(a.stack);
  const double lambda_p =
      pump_wavelength(tmpl.design_wavelengths.te_nm, tmpl.design_wavelengths.tm_nm);
  const double lambda = a.lambda_nm > 0.0 ? a.lambda_nm
                        : pol == Polarization::te ? tmpl.design_wavelengths.te_nm
                                                  : tmpl.design_wavelengths.tm_nm;

  const fs::path out = prepare_out(a.out);
  const StackSampler sampler = [&](std::uint64_t s) {
    return sample_initial_stack(s, lambda_p, tmpl);
  };
  const Dataset ds = generate_dataset(a.n, sampler, tmpl, lambda, pol, a.seed, a.gen);
  save_dataset((out / "dataset.bin").string(), ds);

  double lo = 1e9, hi = 0.0, mean = 0.0;
  for (const TrainingSample& s : ds.samples) {
    lo = std::min(lo, s.target_neff);
    hi = std::max(hi, s.target_neff);
    mean += s.target_neff;
  }
  mean /= static_cast<double>(ds.samples.size());
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "dataset summary\n"
                "  samples: %d (%s, %.6g nm)\n"
                "  id: %016llx\n"
                "  grid: %d fine / %d pooled samples\n"
                "  target n_eff: min %.6f  mean %.6f  max %.6f\n",
                a.n, a.pol.c_str(), lambda,
                static_cast<unsigned long long>(dataset_id(ds)), ds.fine_grid.count,
                ds.coarse_grid.count, lo, mean, hi);
  write_text(out / "dataset_stats.txt", buf);

  ordered_json rc;
  rc["command"] = "dataset";
  rc["stack"] = a.stack;
  rc["seed"] = a.seed;
  rc["out"] = a.out;
  rc["dataset"] = {{"n", a.n}, {"polarization", a.pol}, {"lambda_nm", lambda}};
  rc["generator"] = generator_json(a.gen);
  write_text(out / "run_config.json", rc.dump(2) + "\n");
  write_run_meta(out, cmdline);
  std::printf("dataset: %d samples -> %s (id %016llx)\n", a.n, a.out.c_str(),
              static_cast<unsigned long long>(dataset_id(ds)));
}

// --- train / finetune -------------------------------------------------------------

struct TrainArgs {
  std::string dataset, model, out;  // model: resume checkpoint (finetune only)
  std::uint64_t seed = 11;
  std::vector<int> hidden = {192, 192};
  int epochs = 3000;
  double lr = 1e-3;
  double target_mse = 3e-3;
  int patience = 0;
  bool resume = false;
};

void cmd_train(const TrainArgs& a, const std::string& cmdline) {
  if (a.dataset.empty()) throw UsageError("a dataset file is required (--dataset)");
  if (!fs::exists(a.dataset)) throw UsageError("dataset file not found: " + a.dataset);
  if (a.epochs <= 0) throw UsageError("epoch budget must be positive");
  const Dataset ds = load_dataset(a.dataset);

  SurrogateModel m;
  if (a.resume) {
    if (a.model.empty()) throw UsageError("a model checkpoint is required (--model)");
    if (!fs::exists(a.model)) throw UsageError("model file not found: " + a.model);
    m = load_model(a.model);
  } else {
    m = make_surrogate(ds.polarization, ds.gen.input_len, a.hidden, a.seed);
  }

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.lr = a.lr;
  tc.seed = a.seed;
  tc.patience = a.patience;
  tc.target_mse = a.target_mse;
  const fs::path out = prepare_out(a.out);
  const TrainHistory h = train(m, ds, tc);

  save_model((out / "model.bin").string(), m);
  write_text(out / "loss.csv", csv_from_history(h, m.meta.epochs));

  ordered_json rc;
  rc["command"] = a.resume ? "finetune" : "train";
  rc["seed"] = a.seed;
  rc["out"] = a.out;
  ordered_json t;
  t["dataset"] = a.dataset;
  if (a.resume)
    t["model"] = a.model;
  else
    t["hidden"] = a.hidden;
  t["epochs"] = a.epochs;
  t["lr"] = a.lr;
  t["target_mse"] = a.target_mse;
  t["patience"] = a.patience;
  rc[a.resume ? "finetune" : "train"] = t;
  write_text(out / "run_config.json", rc.dump(2) + "\n");
  write_run_meta(out, cmdline);
  std::printf("%s: %s model, %d cumulative epochs, final mse %.3g/%.3g -> %s\n",
              a.resume ? "finetune" : "train", to_string(m.polarization).c_str(), m.meta.epochs,
              m.meta.final_train_mse, m.meta.final_val_mse, a.out.c_str());
}

// --- optimize ----------------------------------------------------------------------

struct OptimizeArgs {
  std::string stack, te_model, tm_model, initial_stack, out;
  std::uint64_t seed = 13;
  BoundsConfig bounds{0.45, 0.95, 20.0, 250.0};
  GeneratorConfig gen;
  OptimizeConfig oc;
};

OptimizeConfig optimize_config(const json& cfg) {
  const json o = section(cfg, "optimize");
  OptimizeConfig oc;
  oc.adam.lr = o.value("lr", 5e-4);
  oc.adam.beta1 = o.value("beta1", 0.9);
  oc.adam.beta2 = o.value("beta2", 0.999);
  oc.max_iters = o.value("max_iters", 300);
  oc.audit_every = o.value("audit_every", 10);
  oc.fine_tune_every = o.value("fine_tune_every", 10);
  oc.fine_tune_trigger = o.value("fine_tune_trigger", 0.01);
  oc.fine_tune_window = o.value("fine_tune_window", 4);
  oc.warmup_rounds = o.value("warmup_rounds", 40);
  oc.fine_tune.epochs_budget = o.value("fine_tune_epochs", 50);
  oc.fine_tune.lr = o.value("fine_tune_lr", 1e-3);
  oc.fine_tune.target_mse = o.value("fine_tune_target_mse", 1e-6);
  oc.plateau_window = o.value("plateau_window", 50);
  oc.plateau_rel_tol = o.value("plateau_rel_tol", 1e-3);
  return oc;
}

void cmd_optimize(const OptimizeArgs& a, const std::string& cmdline) {
  if (a.te_model.empty() || a.tm_model.empty())
    throw UsageError("pre-trained checkpoints are required (--te-model and --tm-model)");
  for (const std::string& p : {a.te_model, a.tm_model})
    if (!fs::exists(p)) throw UsageError("model file not found: " + p);

  const EpitaxialStack tmpl = load_stack_arg(a.stack);
  const DesignSpace space = DesignSpace::create(tmpl, a.bounds);
  const DesignProblem pb = DesignProblem::create(space, a.gen);
  SurrogateModel te = load_model(a.te_model);
  SurrogateModel tm = load_model(a.tm_model);

  const EpitaxialStack initial =
      a.initial_stack.empty() ? sample_initial_stack(a.seed, pb.lambda_p_nm, tmpl)
                              : load_stack_arg(a.initial_stack);
  OptimizeConfig oc = a.oc;
  oc.seed = a.seed;

  const fs::path out = prepare_out(a.out);
  const OptimizeResult res = optimize(initial, te, tm, pb, oc);

  write_stack_file((out / "initial_stack.json").string(), initial);
  write_stack_file((out / "best_stack.json").string(), res.best_stack);
  write_text(out / "trajectory.csv", trajectory_to_csv(res.trajectory));
  save_model((out / "te_model.bin").string(), te);
  save_model((out / "tm_model.bin").string(), tm);

  SvgSeries surr{"surrogate", "", {}, {}};
  SvgSeries ref{"reference (audited)", "", {}, {}};
  SvgSeries disc{"audit discrepancy", "", {}, {}};
  for (const TrajectoryRecord& r : res.trajectory) {
    surr.x.push_back(r.iter);
    surr.y.push_back(r.fom_surrogate_pmV);
    if (r.audited && std::isfinite(r.fom_reference_pmV)) {
      ref.x.push_back(r.iter);
      ref.y.push_back(r.fom_reference_pmV);
      disc.x.push_back(r.iter);
      disc.y.push_back(r.rel_discrepancy);
    }
  }
  SvgPlotOptions fopt;
  fopt.title = "figure of merit vs iteration";
  fopt.x_label = "iteration";
  fopt.y_label = "|Gamma| (pm/V)";
  write_text(out / "fom.svg", svg_line_plot({surr, ref}, fopt));
  SvgPlotOptions dopt;
  dopt.title = "surrogate-vs-reference discrepancy";
  dopt.x_label = "iteration";
  dopt.y_label = "relative discrepancy";
  dopt.log_y = true;
  write_text(out / "discrepancy.svg", svg_line_plot({disc}, dopt));

  const double ratio = res.initial_reference_fom_pmV > 0.0
                           ? res.best_reference_fom_pmV / res.initial_reference_fom_pmV
                           : 0.0;
  const std::string abort_note =
      res.aborted ? " (aborted: " + res.abort_reason + ")" : std::string();
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "optimization summary\n"
                "  iterations: %zu records%s\n"
                "  reference FOM: initial %.6g pm/V, best %.6g pm/V (x%.3g)\n"
                "  fine-tune events: %zu\n"
                "  efficiency gain (|Gamma|^2 ratio): %.4g\n",
                res.trajectory.size(), abort_note.c_str(),
                res.initial_reference_fom_pmV, res.best_reference_fom_pmV, ratio,
                res.tune_events.size(),
                ratio > 0.0 ? efficiency_ratio(res.best_reference_fom_pmV,
                                               res.initial_reference_fom_pmV)
                            : 0.0);
  write_text(out / "summary.txt", buf);

  ordered_json rc;
  rc["command"] = "optimize";
  rc["stack"] = a.stack;
  rc["seed"] = a.seed;
  rc["out"] = a.out;
  rc["bounds"] = {{"al_lo", a.bounds.al_lo},
                  {"al_hi", a.bounds.al_hi},
                  {"thickness_lo_nm", a.bounds.thickness_lo_nm},
                  {"thickness_hi_nm", a.bounds.thickness_hi_nm}};
  rc["generator"] = generator_json(a.gen);
  rc["optimize"] = {{"te_model", a.te_model},
                    {"tm_model", a.tm_model},
                    {"initial_stack", a.initial_stack},
                    {"max_iters", oc.max_iters},
                    {"lr", oc.adam.lr},
                    {"beta1", oc.adam.beta1},
                    {"beta2", oc.adam.beta2},
                    {"audit_every", oc.audit_every},
                    {"fine_tune_every", oc.fine_tune_every},
                    {"fine_tune_trigger", oc.fine_tune_trigger},
                    {"fine_tune_window", oc.fine_tune_window},
                    {"warmup_rounds", oc.warmup_rounds},
                    {"fine_tune_epochs", oc.fine_tune.epochs_budget},
                    {"fine_tune_lr", oc.fine_tune.lr},
                    {"fine_tune_target_mse", oc.fine_tune.target_mse},
                    {"plateau_window", oc.plateau_window},
                    {"plateau_rel_tol", oc.plateau_rel_tol}};
  write_text(out / "run_config.json", rc.dump(2) + "\n");
  write_run_meta(out, cmdline);
  std::printf("optimize: reference FOM %.6g -> %.6g pm/V (x%.3g) -> %s\n",
              res.initial_reference_fom_pmV, res.best_reference_fom_pmV, ratio, a.out.c_str());
}

// --- analyze -----------------------------------------------------------------------

struct AnalyzeArgs {
  std::string stack, out;
  double grid_dx_nm = 1.0;
  int dispersion_samples = 16;
  double theta_lo_deg = 32.0, theta_hi_deg = 36.0;
  int n_points = 81;
  double signal_lo_nm = 0.0, signal_hi_nm = 0.0;  // 0: 2% band around the design signal
  std::vector<double> pump_angles_deg;            // empty: both process angles
  double pump_bandwidth_ghz = 1.0;
  double interaction_length_mm = 1.0;
  int grid_points = 129;
  double lobe_margin = 1.5;
  std::vector<double> filter_signal_nm, filter_idler_nm;  // empty: midpoint cuts
};

void cmd_analyze(const AnalyzeArgs& a, const std::string& cmdline) {
  const EpitaxialStack stack = load_stack_arg(a.stack);
  validate_stack(stack, false);
  const double lte = stack.design_wavelengths.te_nm;
  const double ltm = stack.design_wavelengths.tm_nm;
  const double lp = pump_wavelength(lte, ltm);
  const double sig_lo = a.signal_lo_nm > 0.0 ? a.signal_lo_nm : lte * 0.98;
  const double sig_hi = a.signal_hi_nm > 0.0 ? a.signal_hi_nm : lte * 1.02;
  if (!(sig_lo > lp && sig_hi > sig_lo))
    throw UsageError("signal window must sit above the pump wavelength");

  ProfileConfig prof;
  prof.grid_dx_nm = a.grid_dx_nm;
  const double table_lo = sig_lo * 0.995;
  const double table_hi = 1.005 / (1.0 / lp - 1.0 / sig_lo);
  const ModeDispersion te = ModeDispersion::solve(stack, Polarization::te, table_lo, table_hi,
                                                  a.dispersion_samples, prof);
  const ModeDispersion tm = ModeDispersion::solve(stack, Polarization::tm, table_lo, table_hi,
                                                  a.dispersion_samples, prof);
  const fs::path out = prepare_out(a.out);

  // tuning curves of both processes over the scan window
  TuningConfig tcfg;
  tcfg.theta_lo_deg = a.theta_lo_deg;
  tcfg.theta_hi_deg = a.theta_hi_deg;
  tcfg.n_points = a.n_points;
  tcfg.signal_lo_nm = sig_lo;
  tcfg.signal_hi_nm = sig_hi;
  const TuningCurvePair curves = tuning_curves(te, tm, lp, tcfg);
  write_text(out / "tuning.csv", tuning_to_csv(curves));

  const auto curve_series = [](const TuningCurve& c, bool idler) {
    SvgSeries s{to_string(c.process), "", {}, {}};
    for (const TuningSample& p : c.samples) {
      s.x.push_back(p.theta_deg);
      s.y.push_back(idler ? p.lambda_idler_nm : p.lambda_signal_nm);
    }
    return s;
  };
  SvgPlotOptions topt;
  topt.title = "signal tuning curves";
  topt.x_label = "pump angle (deg)";
  topt.y_label = "signal wavelength (nm)";
  write_text(out / "tuning_signal.svg",
             svg_line_plot({curve_series(curves.hv, false), curve_series(curves.vh, false)}, topt));
  topt.title = "idler tuning curves";
  topt.y_label = "idler wavelength (nm)";
  write_text(out / "tuning_idler.svg",
             svg_line_plot({curve_series(curves.hv, true), curve_series(curves.vh, true)}, topt));

  // joint spectrum at the matched angles (or the caller's)
  const double t_hv = process_angle_deg(te, tm, PairProcess::hv, lte, ltm, lp);
  const double t_vh = process_angle_deg(te, tm, PairProcess::vh, lte, ltm, lp);
  JsaConfig jc;
  jc.pump_angles_deg = a.pump_angles_deg.empty() ? std::vector<double>{t_hv, t_vh}
                                                 : a.pump_angles_deg;
  jc.pump_bandwidth_ghz = a.pump_bandwidth_ghz;
  jc.interaction_length_mm = a.interaction_length_mm;
  jc.lambda_p_nm = lp;
  const JsaGridSpec grid = auto_jsa_grid(te, tm, jc, a.grid_points, a.lobe_margin);
  const JointSpectralAmplitude state = jsa(te, tm, jc, grid);
  write_text(out / "jsi.csv", jsi_to_csv(state));

  const auto heatmap = [&](const JointSpectralAmplitude& s, const std::string& title) {
    std::vector<double> inten(s.phi_hv.size());
    for (std::size_t k = 0; k < inten.size(); ++k)
      inten[k] = std::norm(s.phi_hv[k]) + std::norm(s.phi_vh[k]);
    SvgPlotOptions hopt;
    hopt.title = title;
    hopt.x_label = "signal omega (rad/s)";
    hopt.y_label = "idler omega (rad/s)";
    return svg_heatmap(s.omega1_rad_s, s.omega2_rad_s, inten, hopt);
  };
  write_text(out / "jsi.svg", heatmap(state, "joint spectral intensity"));

  // spectral windows: caller-specified, or midway between the matched point
  // and the crossed-process lobe on each axis
  WavelengthWindow wsig, widl;
  if (a.filter_signal_nm.size() == 2 && a.filter_idler_nm.size() == 2) {
    wsig = {a.filter_signal_nm[0], a.filter_signal_nm[1]};
    widl = {a.filter_idler_nm[0], a.filter_idler_nm[1]};
  } else if (a.filter_signal_nm.empty() && a.filter_idler_nm.empty()) {
    const auto cross_hv = tuning_point(te, tm, PairProcess::hv, lp, t_vh);
    const auto cross_vh = tuning_point(te, tm, PairProcess::vh, lp, t_hv);
    if (!cross_hv || !cross_vh)
      throw NumericalError("cannot derive filter windows: crossed process unmatched");
    wsig = {0.5 * (lte + cross_vh->lambda_signal_nm), 0.5 * (lte + cross_hv->lambda_signal_nm)};
    widl = {0.5 * (ltm + cross_hv->lambda_idler_nm), 0.5 * (ltm + cross_vh->lambda_idler_nm)};
  } else {
    throw UsageError("filter windows need [lo, hi] for both axes, or neither");
  }
  const FilterResult filtered = filter_jsa(state, wsig, widl);
  write_text(out / "jsi_filtered.csv", jsi_to_csv(filtered.state));
  write_text(out / "jsi_filtered.svg", heatmap(filtered.state, "filtered joint spectral intensity"));

  const auto write_marginals = [&](const JointSpectralAmplitude& s, const std::string& suffix) {
    write_text(out / ("marginal_signal" + suffix + ".csv"),
               marginal_to_csv(marginal(s, JsaAxis::signal)));
    write_text(out / ("marginal_idler" + suffix + ".csv"),
               marginal_to_csv(marginal(s, JsaAxis::idler)));
  };
  write_marginals(state, "");
  write_marginals(filtered.state, "_filtered");
  const auto marginal_series = [&](const JointSpectralAmplitude& s, const char* label) {
    const MarginalSpectrum m = marginal(s, JsaAxis::signal);
    return SvgSeries{label, "", m.lambda_nm, m.density};
  };
  SvgPlotOptions mopt;
  mopt.title = "signal marginal spectrum";
  mopt.x_label = "signal wavelength (nm)";
  mopt.y_label = "density (s/rad)";
  write_text(out / "marginal_signal.svg",
             svg_line_plot({marginal_series(state, "unfiltered"),
                            marginal_series(filtered.state, "filtered")},
                           mopt));

  // polarization state before/after the windows, plus the ion-side amplitudes
  const BiphotonPolarizationState raw = polarization_state(state);
  const BiphotonPolarizationState pure = polarization_state(filtered.state);
  const IonPhotonState ion = clebsch_gordan_ion_state();
  double split_mid = 0.0, split_theta = 0.0;
  {
    const auto split = branch_splitting_rad_s(curves);
    const double center = 0.5 * (t_hv + t_vh);
    double best = 1e18;
    for (const auto& [theta, dw] : split)
      if (std::abs(theta - center) < best) {
        best = std::abs(theta - center);
        split_theta = theta;
        split_mid = dw;
      }
  }
  char buf[1536];
  std::snprintf(
      buf, sizeof buf,
      "biphoton state analysis\n"
      "  pump: %.6g nm, %.6g GHz FWHM, interaction length %.6g mm\n"
      "  process angles: hv %.6f deg, vh %.6f deg (splitting %.4f deg)\n"
      "  branch splitting at %.4f deg: %.6g GHz\n"
      "  signal window: [%.6f, %.6f] nm\n"
      "  idler window:  [%.6f, %.6f] nm\n"
      "  kept fraction: %.6f\n"
      "  unfiltered: |c_hv| %.6f  |c_vh| %.6f  |overlap| %.6f  purity %.6f  concurrence %.6f\n"
      "  filtered:   |c_hv| %.6f  |c_vh| %.6f  |overlap| %.6f  purity %.6f  concurrence %.6f\n"
      "  ion-photon amplitudes (%s, %s): %.9f, %.9f -> concurrence %.9f\n",
      lp, jc.pump_bandwidth_ghz, jc.interaction_length_mm, t_hv, t_vh, t_hv - t_vh, split_theta,
      std::abs(split_mid) / (2.0 * M_PI * 1e9), wsig.lo_nm, wsig.hi_nm, widl.lo_nm, widl.hi_nm,
      filtered.kept_fraction, std::abs(raw.c_hv), std::abs(raw.c_vh), std::abs(raw.overlap),
      raw.purity, raw.concurrence, std::abs(pure.c_hv), std::abs(pure.c_vh),
      std::abs(pure.overlap), pure.purity, pure.concurrence, ion.level_sigma_minus.c_str(),
      ion.level_sigma_plus.c_str(), ion.amplitude_sigma_minus, ion.amplitude_sigma_plus,
      ion_photon_concurrence(ion));
  write_text(out / "state_report.txt", buf);
  write_text(out / "rate_report.txt", render_rate_report(rate_budget(reference_rate_ledger())));

  ordered_json rc;
  rc["command"] = "analyze";
  rc["stack"] = a.stack;
  rc["out"] = a.out;
  rc["analyze"] = {{"grid_dx_nm", a.grid_dx_nm},
                   {"dispersion_samples", a.dispersion_samples},
                   {"theta_lo_deg", a.theta_lo_deg},
                   {"theta_hi_deg", a.theta_hi_deg},
                   {"n_points", a.n_points},
                   {"signal_lo_nm", sig_lo},
                   {"signal_hi_nm", sig_hi},
                   {"pump_angles_deg", jc.pump_angles_deg},
                   {"pump_bandwidth_ghz", jc.pump_bandwidth_ghz},
                   {"interaction_length_mm", jc.interaction_length_mm},
                   {"grid_points", a.grid_points},
                   {"lobe_margin", a.lobe_margin},
                   {"filter_signal_nm", std::vector<double>{wsig.lo_nm, wsig.hi_nm}},
                   {"filter_idler_nm", std::vector<double>{widl.lo_nm, widl.hi_nm}}};
  write_text(out / "run_config.json", rc.dump(2) + "\n");
  write_run_meta(out, cmdline);
  std::printf("analyze: angles %.4f/%.4f deg, kept %.3f, concurrence %.4f -> %s\n", t_hv, t_vh,
              filtered.kept_fraction, pure.concurrence, a.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  std::string cmdline;
  for (int i = 0; i < argc; ++i) {
    if (i) cmdline += ' ';
    cmdline += argv[i];
  }

  CLI::App app{"nlwg: inverse design and biphoton analysis of multilayer waveguide pair sources"};
  app.require_subcommand(1);
  std::string config_path;

  auto add_common = [&](CLI::App* sub, std::string* stack, std::string* outdir,
                        std::uint64_t* seed) {
    sub->add_option("--config", config_path, "JSON config file");
    if (stack) sub->add_option("--stack", *stack, "epitaxial stack JSON file");
    sub->add_option("--out", *outdir, "output directory");
    if (seed) sub->add_option("--seed", *seed, "master seed");
  };

  // dataset
  DatasetArgs da;
  da.out = "dataset_out";
  auto* cds = app.add_subcommand("dataset", "generate a reference-solve training dataset");
  add_common(cds, &da.stack, &da.out, &da.seed);
  cds->add_option("--n", da.n, "number of samples");
  cds->add_option("--pol", da.pol, "polarization: te or tm");
  cds->add_option("--lambda", da.lambda_nm, "wavelength in nm (default: design wavelength)");
  cds->callback([&] {
    const json cfg = load_config(config_path);
    const json sec = section(cfg, "dataset");
    if (!cds->count("--stack")) da.stack = cfg.value("stack", da.stack);
    if (!cds->count("--seed")) da.seed = cfg.value("seed", da.seed);
    if (!cds->count("--out")) da.out = cfg.value("out", da.out);
    if (!cds->count("--n")) da.n = sec.value("n", da.n);
    if (!cds->count("--pol")) da.pol = sec.value("polarization", da.pol);
    if (!cds->count("--lambda")) da.lambda_nm = sec.value("lambda_nm", da.lambda_nm);
    da.gen = generator_config(cfg);
    cmd_dataset(da, cmdline);
  });

  // train / finetune share the runner
  TrainArgs ta;
  ta.out = "train_out";
  auto* ctr = app.add_subcommand("train", "train a surrogate on a dataset");
  add_common(ctr, nullptr, &ta.out, &ta.seed);
  ctr->add_option("--dataset", ta.dataset, "dataset file");
  ctr->add_option("--epochs", ta.epochs, "epoch budget");
  ctr->add_option("--lr", ta.lr, "learning rate");
  ctr->add_option("--target-mse", ta.target_mse, "early-stop threshold");
  ctr->callback([&] {
    const json cfg = load_config(config_path);
    const json sec = section(cfg, "train");
    if (!ctr->count("--seed")) ta.seed = cfg.value("seed", ta.seed);
    if (!ctr->count("--out")) ta.out = cfg.value("out", ta.out);
    if (!ctr->count("--dataset")) ta.dataset = sec.value("dataset", ta.dataset);
    if (!ctr->count("--epochs")) ta.epochs = sec.value("epochs", ta.epochs);
    if (!ctr->count("--lr")) ta.lr = sec.value("lr", ta.lr);
    if (!ctr->count("--target-mse")) ta.target_mse = sec.value("target_mse", ta.target_mse);
    ta.hidden = sec.value("hidden", ta.hidden);
    ta.patience = sec.value("patience", ta.patience);
    cmd_train(ta, cmdline);
  });

  TrainArgs fa;
  fa.resume = true;
  fa.out = "finetune_out";
  fa.epochs = 500;
  fa.lr = 1e-4;
  fa.target_mse = 1e-6;
  auto* cft = app.add_subcommand("finetune", "resume training from a checkpoint");
  add_common(cft, nullptr, &fa.out, &fa.seed);
  cft->add_option("--model", fa.model, "model checkpoint to resume");
  cft->add_option("--dataset", fa.dataset, "dataset file");
  cft->add_option("--epochs", fa.epochs, "epoch budget");
  cft->add_option("--lr", fa.lr, "learning rate");
  cft->add_option("--target-mse", fa.target_mse, "early-stop threshold");
  cft->callback([&] {
    const json cfg = load_config(config_path);
    const json sec = section(cfg, "finetune");
    if (!cft->count("--seed")) fa.seed = cfg.value("seed", fa.seed);
    if (!cft->count("--out")) fa.out = cfg.value("out", fa.out);
    if (!cft->count("--model")) fa.model = sec.value("model", fa.model);
    if (!cft->count("--dataset")) fa.dataset = sec.value("dataset", fa.dataset);
    if (!cft->count("--epochs")) fa.epochs = sec.value("epochs", fa.epochs);
    if (!cft->count("--lr")) fa.lr = sec.value("lr", fa.lr);
    if (!cft->count("--target-mse")) fa.target_mse = sec.value("target_mse", fa.target_mse);
    fa.patience = sec.value("patience", fa.patience);
    cmd_train(fa, cmdline);
  });

  // optimize
  OptimizeArgs oa;
  oa.out = "optimize_out";
  auto* cop = app.add_subcommand("optimize", "run the surrogate-path design ascent");
  add_common(cop, &oa.stack, &oa.out, &oa.seed);
  cop->add_option("--te-model", oa.te_model, "trained TE checkpoint");
  cop->add_option("--tm-model", oa.tm_model, "trained TM checkpoint");
  cop->add_option("--initial", oa.initial_stack,
                  "starting stack file (default: seeded random draw)");
  int iters_flag = 0;
  cop->add_option("--iters", iters_flag, "iteration budget");
  cop->callback([&] {
    const json cfg = load_config(config_path);
    const json sec = section(cfg, "optimize");
    const json bd = section(cfg, "bounds");
    if (!cop->count("--stack")) oa.stack = cfg.value("stack", oa.stack);
    if (!cop->count("--seed")) oa.seed = cfg.value("seed", oa.seed);
    if (!cop->count("--out")) oa.out = cfg.value("out", oa.out);
    if (!cop->count("--te-model")) oa.te_model = sec.value("te_model", oa.te_model);
    if (!cop->count("--tm-model")) oa.tm_model = sec.value("tm_model", oa.tm_model);
    if (!cop->count("--initial")) oa.initial_stack = sec.value("initial_stack", oa.initial_stack);
    oa.bounds.al_lo = bd.value("al_lo", oa.bounds.al_lo);
    oa.bounds.al_hi = bd.value("al_hi", oa.bounds.al_hi);
    oa.bounds.thickness_lo_nm = bd.value("thickness_lo_nm", oa.bounds.thickness_lo_nm);
    oa.bounds.thickness_hi_nm = bd.value("thickness_hi_nm", oa.bounds.thickness_hi_nm);
    oa.gen = generator_config(cfg);
    oa.oc = optimize_config(cfg);
    if (cop->count("--iters")) oa.oc.max_iters = iters_flag;
    cmd_optimize(oa, cmdline);
  });

  // analyze
  AnalyzeArgs aa;
  aa.out = "analyze_out";
  auto* can = app.add_subcommand("analyze", "tuning curves, joint spectrum, state, and rates");
  std::uint64_t unused_seed = 0;
  add_common(can, &aa.stack, &aa.out, &unused_seed);
  can->add_option("--bandwidth", aa.pump_bandwidth_ghz, "pump FWHM bandwidth in GHz");
  can->add_option("--length", aa.interaction_length_mm, "interaction length in mm");
  can->add_option("--grid", aa.grid_points, "JSA grid points per axis");
  can->add_option("--angles", aa.pump_angles_deg, "pump angles in degrees")->delimiter(',');
  can->callback([&] {
    const json cfg = load_config(config_path);
    const json sec = section(cfg, "analyze");
    if (!can->count("--stack")) aa.stack = cfg.value("stack", aa.stack);
    if (!can->count("--out")) aa.out = cfg.value("out", aa.out);
    if (!can->count("--bandwidth"))
      aa.pump_bandwidth_ghz = sec.value("pump_bandwidth_ghz", aa.pump_bandwidth_ghz);
    if (!can->count("--length"))
      aa.interaction_length_mm = sec.value("interaction_length_mm", aa.interaction_length_mm);
    if (!can->count("--grid")) aa.grid_points = sec.value("grid_points", aa.grid_points);
    if (!can->count("--angles"))
      aa.pump_angles_deg = sec.value("pump_angles_deg", aa.pump_angles_deg);
    aa.grid_dx_nm = sec.value("grid_dx_nm", aa.grid_dx_nm);
    aa.dispersion_samples = sec.value("dispersion_samples", aa.dispersion_samples);
    aa.theta_lo_deg = sec.value("theta_lo_deg", aa.theta_lo_deg);
    aa.theta_hi_deg = sec.value("theta_hi_deg", aa.theta_hi_deg);
    aa.n_points = sec.value("n_points", aa.n_points);
    aa.signal_lo_nm = sec.value("signal_lo_nm", aa.signal_lo_nm);
    aa.signal_hi_nm = sec.value("signal_hi_nm", aa.signal_hi_nm);
    aa.lobe_margin = sec.value("lobe_margin", aa.lobe_margin);
    aa.filter_signal_nm = sec.value("filter_signal_nm", aa.filter_signal_nm);
    aa.filter_idler_nm = sec.value("filter_idler_nm", aa.filter_idler_nm);
    cmd_analyze(aa, cmdline);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "nlwg: config error: %s\n", e.what());
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "nlwg: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "nlwg: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "nlwg: %s\n", e.what());
    return 1;
  }
  return 0;
}
