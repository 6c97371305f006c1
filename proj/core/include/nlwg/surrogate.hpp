#pragma once

// Feed-forward surrogates for the guided-mode solve: index profile in, field
// samples plus effective index out. One model per (polarization, wavelength);
// the TM model is trained on the displacement field D -- the reference
// solver's working variable -- so downstream E_TM = D/n^2 stays a cheap
// pointwise map.
//
// The network sees the profile pooled onto a fixed coarse grid (box means
// over near-equal index bins); predictions are pushed back onto the caller's
// grid through a Catmull-Rom stencil and renormalized there to unit power,
// so consumers always receive int f^2 dx = 1 regardless of raw network
// output. Pooling, the dense layers, and the upsampling stencil are all
// fixed-weight linear maps evaluated through the fused-accumulation ops of
// the gradient layer, so a prediction is differentiable in the profile
// samples and evaluates bit-identically on the plain and taped paths.
//
// Checkpoint containers (both little-endian, 64-bit float payloads):
//   model    "NLWGNN01": polarization, resample flag, wavelength, layer
//            sizes, training metadata, then per layer the row-major weight
//            matrix followed by the bias vector
//   dataset  "NLWGDS01": polarization, wavelength, generator config, the
//            fine and coarse grids, then per sample input / target field /
//            target effective index

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlwg/ad.hpp"
#include "nlwg/errors.hpp"
#include "nlwg/modes.hpp"
#include "nlwg/profile.hpp"
#include "nlwg/stack.hpp"

namespace nlwg {

struct TrainMeta {
  int version = 0;  // bumped by every train/fine-tune that performs an update
  int epochs = 0;   // cumulative updates across all training phases
  double final_train_mse = 0.0;
  double final_val_mse = 0.0;
  std::uint64_t dataset_id = 0;
  std::uint64_t seed = 0;
};

// Pooled indexes are shifted by a fixed constant before the first dense layer
// so air (n = 1) and AlGaAs (n ~ 2.9..3.5) straddle zero; raw values near 3
// would start every tanh unit deep in saturation.
inline constexpr double kInputShift = 2.0;

struct SurrogateModel {
  Polarization polarization = Polarization::te;
  double lambda_nm = 0.0;  // set when trained; 0 = untrained
  int input_len = 0;
  bool resample = true;  // pool/interpolate mismatched grids instead of erroring
  std::vector<int> sizes;              // {input, hidden..., input + 1}
  std::vector<std::vector<double>> w;  // w[l]: sizes[l+1] x sizes[l], row-major
  std::vector<std::vector<double>> b;  // b[l]: sizes[l+1]
  TrainMeta meta;
};

// Glorot-uniform weights, zero biases; deterministic under the seed.
SurrogateModel make_surrogate(Polarization pol, int input_len, std::span<const int> hidden,
                              std::uint64_t seed);

// Shape consistency and weight finiteness; throws on violation.
void check_model(const SurrogateModel& m);

struct TrainingSample {
  std::vector<double> input;         // pooled index profile
  std::vector<double> target_field;  // pooled reference mode, unit power per um, sign-fixed
  double target_neff = 0.0;
};

struct GeneratorConfig {
  int input_len = 256;
  ProfileConfig profile;       // evaluation-grid recipe for the reference solves
  double grid_headroom = 1.6;  // thickness growth margin so one grid fits all draws
  double val_fraction = 0.2;   // trailing fraction held out for validation
  int attempt_factor = 100;    // give up after attempt_factor * n draws
};

struct Dataset {
  Polarization polarization = Polarization::te;
  double lambda_nm = 0.0;
  GeneratorConfig gen;
  Grid fine_grid;    // shared evaluation grid of the reference solves
  Grid coarse_grid;  // pooled representation (bin centroids)
  std::uint64_t seed = 0;
  std::vector<TrainingSample> samples;
};

// Content fingerprint of the serialized dataset.
std::uint64_t dataset_id(const Dataset& ds);

// The fixed evaluation grid every draw shares: sized for the template's total
// thickness times the headroom.
Grid dataset_grid(const EpitaxialStack& template_stack, const GeneratorConfig& cfg);

// Draws a stack from the configured initial distribution; the argument is a
// per-attempt derived seed.
using StackSampler = std::function<EpitaxialStack(std::uint64_t)>;

// One reference solve -> pooled (input, target) pair; nullopt when the stack
// guides no mode at this wavelength.
std::optional<TrainingSample> make_training_sample(const EpitaxialStack& stack, double lambda_nm,
                                                   Polarization pol, const Grid& fine_grid,
                                                   const GeneratorConfig& cfg);

// Rejection-samples n distinct guided structures; deterministic under seed
// (attempt k always uses derive_seed(seed, k)).
Dataset generate_dataset(int n, const StackSampler& sampler, const EpitaxialStack& grid_template,
                         double lambda_nm, Polarization pol, std::uint64_t seed,
                         const GeneratorConfig& cfg = {});

struct TrainConfig {
  int epochs = 2000;
  double lr = 1e-3;  // network training rate (the design loop's rate is separate)
  std::uint64_t seed = 0;
  int patience = 0;  // stop after this many epochs without val improvement; 0 = off
  double target_mse = 1e-6;
  double divergence_factor = 1e3;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

struct TrainHistory {
  std::vector<double> train_mse, val_mse;  // entry 0 is the pre-update state
  bool reached_target = false;
};

// Full-batch Adam on MSE(field) + MSE(n_eff), equally weighted. Stops early
// when the validation MSE (train MSE if the validation split is empty) drops
// below target_mse; throws TrainingError on divergence.
TrainHistory train(SurrogateModel& model, const Dataset& ds, const TrainConfig& cfg = {});

// Combined MSE of the raw network output over the given samples.
double evaluate_mse(const SurrogateModel& model, std::span<const TrainingSample> samples);

struct FineTuneConfig {
  int epochs_budget = 40;
  double lr = 1e-3;
  double target_mse = 1e-6;
};

struct FineTuneResult {
  int epochs_run = 0;
  double final_mse = 0.0;
  int solved = 0;   // designs with a guided reference solution
  int skipped = 0;  // designs without one
};

// Re-anchors the model on fresh reference solves of recently visited designs.
// Runs until the local MSE clears target_mse or the budget is exhausted; the
// version is bumped only when at least one update happened (a zero budget or
// an already-converged set leaves the model untouched).
FineTuneResult fine_tune(SurrogateModel& model, const DesignSpace& space,
                         std::span<const std::vector<double>> recent_designs,
                         const GeneratorConfig& gen, const FineTuneConfig& cfg = {});

void save_model(const std::string& path, const SurrogateModel& m);
SurrogateModel load_model(const std::string& path);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

template <class T>
struct PredictionT {
  std::vector<T> field;  // on the query profile's grid, unit power
  T n_eff{};
};
using Prediction = PredictionT<double>;

namespace detail {

// fencepost bin starts: bin k covers [first[k], first[k+1])
struct PoolPlan {
  std::vector<std::int32_t> first;
};
PoolPlan make_pool_plan(int src_len, int dst_len);

// per-destination-sample 4-tap Catmull-Rom stencil, ends clamped
struct ResamplePlan {
  std::vector<std::array<std::int32_t, 4>> idx;
  std::vector<std::array<double, 4>> w;
};
ResamplePlan make_resample_plan(int src_len, int dst_len);

template <class T>
std::vector<T> resample_with_plan(const ResamplePlan& plan, std::span<const T> src) {
  std::vector<T> out;
  out.reserve(plan.idx.size());
  for (std::size_t j = 0; j < plan.idx.size(); ++j) {
    const auto& ix = plan.idx[j];
    const std::array<T, 4> taps{src[static_cast<std::size_t>(ix[0])],
                                src[static_cast<std::size_t>(ix[1])],
                                src[static_cast<std::size_t>(ix[2])],
                                src[static_cast<std::size_t>(ix[3])]};
    out.push_back(ad::lincomb(std::span<const double>(plan.w[j].data(), 4),
                              std::span<const T>(taps.data(), 4)));
  }
  return out;
}

template <class T>
std::vector<T> pool_with_plan(const PoolPlan& plan, std::span<const T> src) {
  std::vector<T> out;
  const std::size_t nbin = plan.first.size() - 1;
  out.reserve(nbin);
  for (std::size_t k = 0; k < nbin; ++k) {
    const auto lo = static_cast<std::size_t>(plan.first[k]);
    const auto hi = static_cast<std::size_t>(plan.first[k + 1]);
    out.push_back(ad::sum_scaled(src.subspan(lo, hi - lo), 1.0 / static_cast<double>(hi - lo)));
  }
  return out;
}

}  // namespace detail

template <class T>
PredictionT<T> predict_profile(const SurrogateModel& m, const ProfileT<T>& p) {
  const int nlayers = static_cast<int>(m.w.size());
  if (m.input_len < 4 || m.sizes.size() < 2 || m.w.size() != m.b.size() ||
      m.sizes.size() != m.w.size() + 1)
    throw ValidationError("surrogate model is empty or inconsistently shaped");
  const int L = m.input_len;
  const int C = p.grid.count;
  if (static_cast<int>(p.n.size()) != C)
    throw ShapeError("profile sample count does not match its grid");
  if (C < 4) throw ShapeError("profile grid is too short for prediction");
  if (C != L && !m.resample)
    throw ShapeError("profile grid length " + std::to_string(C) + " != model input length " +
                     std::to_string(L) + " and resampling is disabled");
  if (m.lambda_nm > 0.0 && p.lambda_nm > 0.0 && std::abs(m.lambda_nm - p.lambda_nm) > 1e-9)
    throw ValidationError("profile wavelength " + std::to_string(p.lambda_nm) +
                          " nm does not match the model's " + std::to_string(m.lambda_nm) + " nm");

  std::span<const T> raw(p.n.data(), p.n.size());
  std::vector<T> h;
  if (C == L)
    h.assign(raw.begin(), raw.end());
  else if (C > L)
    h = detail::pool_with_plan<T>(detail::make_pool_plan(C, L), raw);
  else
    h = detail::resample_with_plan<T>(detail::make_resample_plan(C, L), raw);
  for (T& v : h) v = v - kInputShift;

  using std::tanh;
  using ad::tanh;
  std::vector<T> next;
  for (int l = 0; l < nlayers; ++l) {
    const int rows = m.sizes[static_cast<std::size_t>(l) + 1];
    const int cols = m.sizes[static_cast<std::size_t>(l)];
    if (static_cast<int>(h.size()) != cols)
      throw ShapeError("surrogate layer input width mismatch");
    next.clear();
    next.reserve(static_cast<std::size_t>(rows));
    const double* wl = m.w[static_cast<std::size_t>(l)].data();
    for (int r = 0; r < rows; ++r) {
      T a = ad::affine(m.b[static_cast<std::size_t>(l)][static_cast<std::size_t>(r)],
                       std::span<const double>(wl + static_cast<std::size_t>(r) * cols,
                                               static_cast<std::size_t>(cols)),
                       std::span<const T>(h.data(), h.size()));
      next.push_back(l + 1 < nlayers ? tanh(a) : a);
    }
    h.swap(next);
  }
  // h = raw output: field block then the effective-index head
  T neff = h.back();
  h.pop_back();

  std::vector<T> f;
  if (C == L)
    f = std::move(h);
  else
    f = detail::resample_with_plan<T>(detail::make_resample_plan(L, C),
                                      std::span<const T>(h.data(), h.size()));

  std::vector<T> sq;
  sq.reserve(f.size());
  for (const T& v : f) sq.push_back(v * v);
  T pw = trapz(p.grid, std::span<const T>(sq.data(), sq.size()));
  if (!std::isfinite(val(pw)) || !(val(pw) > 0.0))
    throw NumericalError("surrogate field power is not positive; model output degenerate");
  using std::sqrt;
  using ad::sqrt;
  T inv = 1.0 / sqrt(pw);
  for (T& v : f) v = v * inv;
  return {std::move(f), std::move(neff)};
}

inline Prediction predict(const SurrogateModel& m, const IndexProfile& p) {
  return predict_profile<double>(m, p);
}

}  // namespace nlwg
