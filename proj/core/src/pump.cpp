#include "nlwg/pump.hpp"

#include <cstdio>
#include <sstream>

#include "nlwg/materials.hpp"

namespace nlwg {

PumpField pump_field(const IndexProfile& profile, double theta_deg, PumpPolarization pol) {
  return pump_field_t<double>(profile, theta_deg, pol);
}

void ensure_pump_transparency(const EpitaxialStack& stack, double lambda_p_nm, double margin_ev) {
  for (std::size_t g = 0; g < stack.groups.size(); ++g) {
    const LayerGroup& grp = stack.groups[g];
    if (grp.role == LayerRole::substrate || grp.role == LayerRole::air) continue;
    for (std::size_t s = 0; s < grp.sublayers.size(); ++s) {
      if (is_transparent(grp.sublayers[s].al_fraction, lambda_p_nm, margin_ev)) continue;
      std::ostringstream os;
      os << "group " << g << " (" << to_string(grp.role) << ") sublayer " << s
         << ": Al fraction " << grp.sublayers[s].al_fraction << " absorbs at the pump ("
         << lambda_p_nm << " nm)";
      throw ConstraintError(os.str());
    }
  }
}

std::vector<std::pair<double, double>> cavity_resonance_scan(const IndexProfile& profile,
                                                             double theta_deg,
                                                             double lambda_min_nm,
                                                             double lambda_max_nm, int n_points,
                                                             double core_x0_nm,
                                                             double core_x1_nm) {
  if (!(lambda_min_nm > 0.0 && lambda_max_nm >= lambda_min_nm))
    throw ValidationError("scan range must satisfy 0 < lambda_min <= lambda_max");
  if (n_points < 2) throw ValidationError("resonance scan needs at least two points");
  if (!(core_x1_nm > core_x0_nm)) throw ValidationError("core window is empty");

  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(n_points));
  IndexProfile p = profile;  // frozen n(x): only the vacuum wavevector scans
  for (int i = 0; i < n_points; ++i) {
    const double lam =
        lambda_min_nm + (lambda_max_nm - lambda_min_nm) * i / static_cast<double>(n_points - 1);
    p.lambda_nm = lam;
    PumpField f = pump_field_t<double>(p, theta_deg);
    double energy = 0.0;
    for (int k = 0; k < p.grid.count; ++k) {
      const double x = p.grid.x(k);
      if (x < core_x0_nm || x > core_x1_nm) continue;
      energy += norm(f.phi_plus[static_cast<std::size_t>(k)] +
                     f.phi_minus[static_cast<std::size_t>(k)]);
    }
    out.emplace_back(lam, energy * p.grid.dx_nm);
  }
  return out;
}

std::string pump_to_csv(const PumpField& field) {
  if (field.phi_plus.size() != static_cast<std::size_t>(field.grid.count) ||
      field.phi_minus.size() != field.phi_plus.size())
    throw ShapeError("pump field and grid sizes differ");
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "# lambda_nm=%.17g\n# theta_deg=%.17g\n", field.lambda_nm,
                field.theta_deg);
  out += line;
  std::snprintf(line, sizeof line, "# reflectance=%.17g\n# transmittance=%.17g\n",
                field.reflectance, field.transmittance);
  out += line;
  out += "x_nm,re_phi_plus,im_phi_plus,re_phi_minus,im_phi_minus\n";
  for (int k = 0; k < field.grid.count; ++k) {
    const auto& p = field.phi_plus[static_cast<std::size_t>(k)];
    const auto& q = field.phi_minus[static_cast<std::size_t>(k)];
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n", field.grid.x(k), p.re,
                  p.im, q.re, q.im);
    out += line;
  }
  return out;
}

std::string scan_to_csv(const std::vector<std::pair<double, double>>& scan) {
  std::string out = "lambda_nm,core_energy\n";
  char line[80];
  for (const auto& [lam, energy] : scan) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", lam, energy);
    out += line;
  }
  return out;
}

}  // namespace nlwg
