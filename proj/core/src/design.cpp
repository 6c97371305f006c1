#include "nlwg/design.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <random>
#include <utility>

#include "nlwg/materials.hpp"
#include "nlwg/rng.hpp"

namespace nlwg {

double pump_wavelength(double lambda_s_nm, double lambda_i_nm) {
  if (lambda_s_nm <= 0.0 || lambda_i_nm <= 0.0)
    throw ValidationError("signal and idler wavelengths must be positive");
  return lambda_s_nm * lambda_i_nm / (lambda_s_nm + lambda_i_nm);
}

EpitaxialStack sample_initial_stack(std::uint64_t seed, double lambda_p_nm,
                                    const EpitaxialStack& tmpl) {
  if (lambda_p_nm <= 0.0) throw ValidationError("pump wavelength must be positive");
  validate_stack(tmpl, false);

  double mirror_sum = 0.0, core_sum = 0.0;
  int mirror_n = 0, core_n = 0;
  for (const LayerGroup& g : tmpl.groups) {
    if (g.role == LayerRole::bragg_bottom || g.role == LayerRole::bragg_top) {
      for (const Sublayer& sl : g.sublayers) {
        mirror_sum += g.repeat * sl.al_fraction;
        mirror_n += g.repeat;
      }
    } else if (g.role == LayerRole::core) {
      for (const Sublayer& sl : g.sublayers) {
        core_sum += g.repeat * sl.al_fraction;
        core_n += g.repeat;
      }
    }
  }
  if (mirror_n == 0 || core_n == 0)
    throw ValidationError("template must declare mirror and core groups");
  if (!(core_sum / core_n < mirror_sum / mirror_n))
    throw ValidationError("template core Al mean must stay below the mirror mean");

  auto eng = make_engine(seed);
  std::uniform_real_distribution<double> wave_factor(0.75, 1.25);
  std::uniform_real_distribution<double> buffer_nm(50.0, 200.0);

  EpitaxialStack out = tmpl;
  out.design_wavelengths.pump_nm = lambda_p_nm;
  for (LayerGroup& g : out.groups) {
    for (Sublayer& sl : g.sublayers) {
      switch (g.role) {
        case LayerRole::substrate:
        case LayerRole::air:
          break;
        case LayerRole::bragg_bottom:
        case LayerRole::bragg_top:
          sl.thickness_nm =
              wave_factor(eng) * lambda_p_nm / (4.0 * refractive_index(sl.al_fraction, lambda_p_nm));
          break;
        case LayerRole::core:
          sl.thickness_nm =
              wave_factor(eng) * lambda_p_nm / (2.0 * refractive_index(sl.al_fraction, lambda_p_nm));
          break;
        case LayerRole::buffer:
          sl.thickness_nm = buffer_nm(eng);
          break;
      }
    }
  }
  validate_stack(out, false);
  return out;
}

double efficiency_ratio(double gamma_a_pmV, double gamma_b_pmV) {
  if (!(gamma_b_pmV > 0.0))
    throw DomainError("efficiency ratio needs a positive reference overlap");
  const double r = gamma_a_pmV / gamma_b_pmV;
  return r * r;
}

DesignProblem DesignProblem::create(const DesignSpace& space, const GeneratorConfig& gen,
                                    const Chi2Model& chi2) {
  DesignProblem pb;
  pb.space = space;
  pb.gen = gen;
  pb.chi2 = chi2;
  const DesignWavelengths& wl = space.skeleton().design_wavelengths;
  if (wl.te_nm <= 0.0 || wl.tm_nm <= 0.0)
    throw ValidationError("design template must carry positive TE and TM wavelengths");
  pb.lambda_te_nm = wl.te_nm;
  pb.lambda_tm_nm = wl.tm_nm;
  pb.lambda_p_nm = pump_wavelength(wl.te_nm, wl.tm_nm);
  pb.grid = dataset_grid(space.skeleton(), gen);
  return pb;
}

ReferenceEval evaluate_reference_fom(const DesignProblem& pb, std::span<const double> design) {
  const EpitaxialStack stack = pb.space.decode(design);
  const std::vector<FlatLayer> layers = flatten(stack);
  FlatStackT<double> fs;
  fs.substrate_al = stack.groups.front().sublayers.front().al_fraction;
  for (const FlatLayer& lay : layers) {
    fs.thickness_nm.push_back(lay.thickness_nm);
    fs.al_fraction.push_back(lay.al_fraction);
    fs.role.push_back(lay.role);
  }
  const double w = pb.gen.profile.smoothing_width_nm;
  const DispersionModelId disp = pb.gen.profile.dispersion;
  const SmoothedGeometry<double> geo(pb.grid, pb.gen.profile.substrate_pad_nm,
                                     std::span<const double>(fs.thickness_nm), w);
  const IndexProfile p_te =
      build_index_profile_t<double>(fs, pb.lambda_te_nm, geo, w, SubstrateFill::clamp, disp);
  const IndexProfile p_tm =
      build_index_profile_t<double>(fs, pb.lambda_tm_nm, geo, w, SubstrateFill::clamp, disp);

  ReferenceEval ev;
  const std::vector<GuidedMode> mte = solve_modes(p_te, Polarization::te, 3);
  const std::vector<GuidedMode> mtm = solve_modes(p_tm, Polarization::tm, 3);
  if (mte.empty() || mtm.empty()) return ev;
  const RegionMap rg = compute_regions(layers, pb.gen.profile.substrate_pad_nm);
  const GuidedMode& te = mte[select_fundamental(mte, pb.grid, rg.core_x0, rg.core_x1)];
  const GuidedMode& tm = mtm[select_fundamental(mtm, pb.grid, rg.core_x0, rg.core_x1)];
  ev.n_te = te.n_eff;
  ev.n_tm = tm.n_eff;

  double theta = 0.0;
  try {
    theta = phase_matching_angle(te.n_eff, tm.n_eff, pb.lambda_te_nm, pb.lambda_tm_nm,
                                 pb.lambda_p_nm);
  } catch (const NoRealAngleError&) {
    return ev;  // indices exist but no real pump tilt bridges them
  }

  const IndexProfile p_pp =
      build_index_profile_t<double>(fs, pb.lambda_p_nm, geo, w, SubstrateFill::physical, disp);
  const PumpField pump = pump_field_t<double>(p_pp, theta);
  const std::vector<double> chi2 = build_chi2_samples(fs, geo, pb.chi2);
  const std::vector<double> e_tm = reconstruct_tm_efield(tm, p_tm);
  ev.fom = overlap_fom<double>(pump, te.field, e_tm, chi2);
  ev.evaluable = true;
  return ev;
}

AuditReport audit_discrepancy(const DesignProblem& pb, const SurrogateModel& te_model,
                              const SurrogateModel& tm_model, std::span<const double> design) {
  AuditReport rep;
  const DesignEvalT<double> s = evaluate_surrogate_fom<double>(pb, te_model, tm_model, design);
  rep.fom_surrogate_pmV = s.fom.gamma_abs;
  const ReferenceEval r = evaluate_reference_fom(pb, design);
  rep.fom_reference_pmV = r.evaluable ? r.fom.gamma_abs : 0.0;
  rep.indeterminate = !r.evaluable || rep.fom_reference_pmV < 1e-12;
  rep.rel_discrepancy = std::abs(rep.fom_surrogate_pmV - rep.fom_reference_pmV) /
                        std::max(rep.fom_reference_pmV, 1e-12);
  return rep;
}

namespace {

void check_models_for(const DesignProblem& pb, const SurrogateModel& te_model,
                      const SurrogateModel& tm_model) {
  check_model(te_model);
  check_model(tm_model);
  if (te_model.polarization != Polarization::te || tm_model.polarization != Polarization::tm)
    throw ValidationError("optimize needs one TE and one TM surrogate, in that order");
  if (te_model.meta.epochs <= 0 || tm_model.meta.epochs <= 0)
    throw ValidationError("optimize requires trained surrogates");
  if (std::abs(te_model.lambda_nm - pb.lambda_te_nm) > 1e-9 ||
      std::abs(tm_model.lambda_nm - pb.lambda_tm_nm) > 1e-9)
    throw ValidationError("surrogate wavelengths do not match the design problem");
  if (pb.gen.input_len != te_model.input_len || pb.gen.input_len != tm_model.input_len)
    throw ShapeError("generator input length does not match the surrogates");
}

}  // namespace

OptimizeResult optimize(const EpitaxialStack& initial, SurrogateModel& te_model,
                        SurrogateModel& tm_model, const DesignProblem& pb,
                        const OptimizeConfig& cfg) {
  check_models_for(pb, te_model, tm_model);
  if (cfg.max_iters < 1) throw ValidationError("optimize needs at least one iteration");
  if (cfg.audit_every < 1) throw ValidationError("audit cadence must be positive");

  OptimizeResult out{.trajectory = {},
                     .state = OptimizerState(pb.space.encode(initial), cfg.adam, cfg.seed),
                     .best_design = {},
                     .best_stack = initial,
                     .best_reference_fom_pmV = 0.0,
                     .initial_reference_fom_pmV = 0.0,
                     .checkpoints = {},
                     .tune_events = {},
                     .aborted = false,
                     .abort_reason = {}};
  OptimizerState& st = out.state;
  const std::size_t dim = st.design.size();

  auto fom_fn = [&](auto v) {
    using T = std::remove_cvref_t<decltype(v[0])>;
    return evaluate_surrogate_fom<T>(pb, te_model, tm_model, std::span<const T>(v)).fom.gamma_abs;
  };
  auto f = ad::make_function(fom_fn);

  std::deque<std::vector<double>> recent;
  const auto remember = [&](const std::vector<double>& d) {
    recent.push_back(d);
    while (static_cast<int>(recent.size()) > std::max(cfg.fine_tune_window, 1)) recent.pop_front();
  };
  const auto run_fine_tune = [&]() {
    const std::vector<std::vector<double>> designs(recent.begin(), recent.end());
    const FineTuneResult a = fine_tune(te_model, pb.space, designs, pb.gen, cfg.fine_tune);
    const FineTuneResult b = fine_tune(tm_model, pb.space, designs, pb.gen, cfg.fine_tune);
    out.tune_events.push_back(
        {st.iteration, a.final_mse, a.epochs_run, b.final_mse, b.epochs_run});
    return a.epochs_run + b.epochs_run;
  };

  // warm-up: anchor both models to the starting design before anything is
  // recorded, so the first audit already reflects locally specialized models.
  // One call per model -- repeated small calls would restart the tuner's
  // moments each time and thrash instead of descending.
  if (cfg.warmup_rounds > 0 && cfg.fine_tune.epochs_budget > 0) {
    FineTuneConfig wc = cfg.fine_tune;
    wc.epochs_budget = cfg.warmup_rounds * cfg.fine_tune.epochs_budget;
    const std::vector<std::vector<double>> start{st.design};
    fine_tune(te_model, pb.space, start, pb.gen, wc);
    fine_tune(tm_model, pb.space, start, pb.gen, wc);
  }

  bool have_best = false;
  bool have_initial = false;
  double best_surrogate = 0.0;
  int stalled = 0;

  const auto audit_into = [&](TrajectoryRecord& rec) {
    const ReferenceEval ref = evaluate_reference_fom(pb, st.design);
    rec.fom_reference_pmV = ref.evaluable ? ref.fom.gamma_abs : 0.0;
    rec.rel_discrepancy = std::abs(rec.fom_surrogate_pmV - rec.fom_reference_pmV) /
                          std::max(rec.fom_reference_pmV, 1e-12);
    rec.audited = true;
    if (!have_initial) {
      out.initial_reference_fom_pmV = rec.fom_reference_pmV;
      have_initial = true;
    }
    if (ref.evaluable && (!have_best || rec.fom_reference_pmV > out.best_reference_fom_pmV)) {
      out.best_reference_fom_pmV = rec.fom_reference_pmV;
      out.best_design = st.design;
      have_best = true;
    }
    return ref.evaluable;
  };

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    TrajectoryRecord rec;
    rec.iter = st.iteration;
    rec.design_hash = hash_doubles(st.design);

    // anchor on the recent window (current design included) before this
    // iteration's value, gradient, and audit, so audited rows measure the
    // model the step will actually use
    remember(st.design);
    if (cfg.fine_tune_every > 0 && st.iteration > 0 && st.iteration % cfg.fine_tune_every == 0)
      run_fine_tune();
    rec.model_version = std::max(te_model.meta.version, tm_model.meta.version);

    ad::DifferentiableScalar gr;
    bool skipped = false;
    try {
      gr = ad::evaluate_with_gradient(f, st.design);
    } catch (const NoRealAngleError&) {
      skipped = true;
    }

    if (skipped) {
      rec.skipped = true;  // zero-FOM penalty row; the design does not move
      out.trajectory.push_back(rec);
      st.iteration += 1;
      ++stalled;
      if (cfg.plateau_window > 0 && stalled >= cfg.plateau_window) break;
      continue;
    }

    bool finite = std::isfinite(gr.value);
    for (std::size_t k = 0; finite && k < dim; ++k) finite = std::isfinite(gr.gradient[k]);
    if (!finite) {
      out.aborted = true;
      out.abort_reason = "non-finite figure of merit or gradient at iteration " +
                         std::to_string(st.iteration);
      break;
    }

    rec.fom_surrogate_pmV = gr.value;
    {  // the angle and indices behind it, for the record (cheap double pass)
      const DesignEvalT<double> ev =
          evaluate_surrogate_fom<double>(pb, te_model, tm_model, st.design);
      rec.theta_deg = ev.fom.theta_deg;
      rec.n_te = ev.n_te;
      rec.n_tm = ev.n_tm;
    }
    if (st.iteration == 0 || st.iteration == cfg.max_iters / 2)
      out.checkpoints.push_back(st.design);

    if (st.iteration % cfg.audit_every == 0) {
      audit_into(rec);
      if (rec.rel_discrepancy > cfg.fine_tune_trigger && rec.fom_reference_pmV >= 1e-12 &&
          cfg.fine_tune.epochs_budget > 0) {
        // drift beyond the trigger: re-anchor now; when that moved the
        // weights, refresh the value, angle, and audit (the reference FOM
        // does not depend on the models and is reused)
        if (run_fine_tune() > 0) {
          try {
            gr = ad::evaluate_with_gradient(f, st.design);
          } catch (const NoRealAngleError&) {
            rec.skipped = true;
          }
          if (!rec.skipped) {
            rec.fom_surrogate_pmV = gr.value;
            const DesignEvalT<double> ev =
                evaluate_surrogate_fom<double>(pb, te_model, tm_model, st.design);
            rec.theta_deg = ev.fom.theta_deg;
            rec.n_te = ev.n_te;
            rec.n_tm = ev.n_tm;
            rec.rel_discrepancy = std::abs(rec.fom_surrogate_pmV - rec.fom_reference_pmV) /
                                  std::max(rec.fom_reference_pmV, 1e-12);
            rec.model_version = std::max(te_model.meta.version, tm_model.meta.version);
          }
        }
      }
    }
    out.trajectory.push_back(rec);
    if (rec.skipped) {  // re-anchored model lost the angle: hold position
      st.iteration += 1;
      ++stalled;
      if (cfg.plateau_window > 0 && stalled >= cfg.plateau_window) break;
      continue;
    }

    if (gr.value > best_surrogate * (1.0 + cfg.plateau_rel_tol)) {
      best_surrogate = std::max(best_surrogate, gr.value);
      stalled = 0;
    } else {
      best_surrogate = std::max(best_surrogate, gr.value);
      ++stalled;
    }

    // ascend |Gamma| by descending its negation
    std::vector<double> neg(dim);
    for (std::size_t k = 0; k < dim; ++k) neg[k] = -gr.gradient[k];
    st.adam.step(st.design, neg, st.hyper);
    st.iteration += 1;

    if (cfg.plateau_window > 0 && stalled >= cfg.plateau_window) break;
  }

  if (!out.aborted) {  // final design: anchor the models there, then audit it
    if (cfg.fine_tune_every > 0 && cfg.fine_tune.epochs_budget > 0) {
      remember(st.design);
      run_fine_tune();
    }
    TrajectoryRecord rec;
    rec.iter = st.iteration;
    rec.design_hash = hash_doubles(st.design);
    rec.model_version = std::max(te_model.meta.version, tm_model.meta.version);
    try {
      const DesignEvalT<double> ev =
          evaluate_surrogate_fom<double>(pb, te_model, tm_model, st.design);
      rec.fom_surrogate_pmV = ev.fom.gamma_abs;
      rec.theta_deg = ev.fom.theta_deg;
      rec.n_te = ev.n_te;
      rec.n_tm = ev.n_tm;
      audit_into(rec);
    } catch (const NoRealAngleError&) {
      rec.skipped = true;
    }
    out.trajectory.push_back(rec);
    out.checkpoints.push_back(st.design);
  }

  if (!have_best) out.best_design = st.design;
  out.best_stack = pb.space.decode(out.best_design);
  return out;
}

std::string trajectory_to_csv(std::span<const TrajectoryRecord> records) {
  std::string csv =
      "iter,fom_surrogate_pmV,fom_reference_pmV,rel_discrepancy,theta_deg,model_version,"
      "design_hash\n";
  char line[256];
  for (const TrajectoryRecord& r : records) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%d,%016llx\n", r.iter,
                  r.fom_surrogate_pmV, r.fom_reference_pmV, r.rel_discrepancy, r.theta_deg,
                  r.model_version, static_cast<unsigned long long>(r.design_hash));
    csv += line;
  }
  return csv;
}

}  // namespace nlwg
