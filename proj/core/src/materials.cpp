#include "nlwg/materials.hpp"

#include <algorithm>
#include <cstdio>

namespace nlwg {

std::string to_string(DispersionModelId id) {
  return id == DispersionModelId::gehrsitz ? "gehrsitz" : "afromowitz";
}

DispersionModelId dispersion_model_from_string(const std::string& s) {
  if (s == "gehrsitz") return DispersionModelId::gehrsitz;
  if (s == "afromowitz") return DispersionModelId::afromowitz;
  throw ValidationError("unknown dispersion model '" + s + "' (expected gehrsitz | afromowitz)");
}

namespace {

double fundamental_pole_nm(DispersionModelId id, double x) {
  // energy of the fundamental resonance in eV (the in-window pole of each fit)
  const double e = id == DispersionModelId::gehrsitz ? 1.4251 + 1.1308 * x + 0.1436 * x * x
                                                     : 1.424 + 1.266 * x + 0.26 * x * x;
  return kHcEvNm / e;
}

}  // namespace

ValidityWindow validity_window(DispersionModelId id, double al_fraction) {
  ValidityWindow w;
  w.lambda_min_nm = std::max(500.0, 1.02 * fundamental_pole_nm(id, al_fraction));
  w.lambda_max_nm = 2500.0;
  return w;
}

double refractive_index(double al_fraction, double lambda_nm, DispersionModelId id) {
  if (al_fraction < 0.0 || al_fraction > 1.0)
    throw ValidationError("Al fraction " + std::to_string(al_fraction) + " outside [0, 1]");
  const ValidityWindow w = validity_window(id, al_fraction);
  if (lambda_nm < w.lambda_min_nm || lambda_nm > w.lambda_max_nm) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "wavelength %.6g nm outside %s validity window [%.1f, %.1f] nm at Al fraction "
                  "%.3f",
                  lambda_nm, to_string(id).c_str(), w.lambda_min_nm, w.lambda_max_nm, al_fraction);
    throw RangeError(msg);
  }
  return index_model(al_fraction, lambda_nm, id);
}

double bandgap_ev(double al_fraction) {
  const double x = al_fraction;
  double eg_gamma = 1.424 + 1.247 * x;
  if (x > 0.45) eg_gamma += 1.147 * (x - 0.45) * (x - 0.45);
  const double eg_x = 1.900 + 0.125 * x + 0.143 * x * x;
  return std::min(eg_gamma, eg_x);
}

bool is_transparent(double al_fraction, double lambda_nm, double margin_ev) {
  const double photon_ev = kHcEvNm / lambda_nm;
  return photon_ev < bandgap_ev(al_fraction) - margin_ev;
}

std::vector<double> chi2_profile(const std::vector<double>& composition, const Chi2Model& m) {
  std::vector<double> out(composition.size());
  for (std::size_t k = 0; k < composition.size(); ++k) out[k] = chi2_value(composition[k], m);
  return out;
}

}  // namespace nlwg
