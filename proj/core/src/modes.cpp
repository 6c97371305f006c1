#include "nlwg/modes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "nlwg/errors.hpp"

namespace nlwg {

std::string to_string(Polarization pol) { return pol == Polarization::te ? "TE" : "TM"; }

Polarization polarization_from_string(const std::string& s) {
  if (s == "TE" || s == "te") return Polarization::te;
  if (s == "TM" || s == "tm") return Polarization::tm;
  throw ValidationError("unknown polarization '" + s + "' (expected TE or TM)");
}

namespace {

constexpr double kScanStep = 1e-4;
constexpr double kBisectTol = 1e-10;
constexpr double kRenorm = 1e12;

struct Cell {
  double width_nm;
  double n, n2;
  int first, count;  // samples owned by this cell
};

std::vector<Cell> merge_cells(const IndexProfile& p) {
  std::vector<Cell> cells;
  const int count = p.grid.count;
  int k = 0;
  while (k < count) {
    int j = k + 1;
    while (j < count && p.n[static_cast<std::size_t>(j)] == p.n[static_cast<std::size_t>(k)]) ++j;
    const double n = p.n[static_cast<std::size_t>(k)];
    cells.push_back({(j - k) * p.grid.dx_nm, n, n * n, k, j - k});
    k = j;
  }
  return cells;
}

struct State {
  double u, w;   // (E, E') for TE; (H, H'/n^2) for TM
  double ls;     // log of the positive scale factored out so far
};

// u' = h w, w' = -(s2/h) u with s2 = k0^2 (n^2 - q^2); h = n^2 for TM, 1 for TE
struct CellPropagator {
  double s2, h;

  void advance(double t, double& u, double& w) const {
    if (s2 > 0.0) {
      const double kap = std::sqrt(s2);
      const double c = std::cos(kap * t), s = std::sin(kap * t);
      const double un = u * c + w * (h / kap) * s;
      w = -u * (kap / h) * s + w * c;
      u = un;
    } else if (s2 < 0.0) {
      const double g = std::sqrt(-s2);
      const double c = std::cosh(g * t), s = std::sinh(g * t);
      const double un = u * c + w * (h / g) * s;
      w = u * (g / h) * s + w * c;
      u = un;
    } else {
      u += w * h * t;
    }
  }

  // field value a distance t into the cell, from the entry state
  double sample(double t, double u, double w) const {
    if (s2 > 0.0) {
      const double kap = std::sqrt(s2);
      return u * std::cos(kap * t) + w * (h / kap) * std::sin(kap * t);
    }
    if (s2 < 0.0) {
      const double g = std::sqrt(-s2);
      return u * std::cosh(g * t) + w * (h / g) * std::sinh(g * t);
    }
    return u + w * h * t;
  }
};

CellPropagator make_prop(const Cell& c, double q, double k0, bool tm) {
  const double s2 = k0 * k0 * (c.n2 - q * q);
  return {s2, tm ? c.n2 : 1.0};
}

void renormalize(State& st, double k0) {
  const double m = std::max(std::abs(st.u), std::abs(st.w) / k0);
  if (m > kRenorm) {
    st.u /= m;
    st.w /= m;
    st.ls += std::log(m);
  }
}

struct Shooter {
  const std::vector<Cell>& cells;
  double q, k0;
  bool tm;
  std::size_t match;  // cell index; match point = its left boundary

  // grows rightward out of the substrate, stops at the match boundary
  State left() const {
    const Cell& c0 = cells.front();
    const double g = k0 * std::sqrt(q * q - c0.n2);
    State st{1.0, g / (tm ? c0.n2 : 1.0), 0.0};
    for (std::size_t i = 0; i < match; ++i) {
      make_prop(cells[i], q, k0, tm).advance(cells[i].width_nm, st.u, st.w);
      renormalize(st, k0);
    }
    return st;
  }

  // decays rightward into the air; propagated backward down to the match boundary
  State right() const {
    const Cell& cl = cells.back();
    const double g = k0 * std::sqrt(q * q - cl.n2);
    State st{1.0, -g / (tm ? cl.n2 : 1.0), 0.0};
    for (std::size_t i = cells.size(); i-- > match;) {
      make_prop(cells[i], q, k0, tm).advance(-cells[i].width_nm, st.u, st.w);
      renormalize(st, k0);
    }
    return st;
  }

  // Wronskian-style mismatch at the match boundary; zero at an eigenvalue.
  // Scaled by an arbitrary positive factor (sign is what the bisection uses).
  double mismatch() const {
    State a = left(), b = right();
    return a.u * (b.w / k0) - b.u * (a.w / k0);
  }
};

// count zero crossings between samples of significant magnitude
int count_sign_changes(std::span<const double> f) {
  double peak = 0.0;
  for (double v : f) peak = std::max(peak, std::abs(v));
  const double floor = 1e-9 * peak;
  int changes = 0;
  double last = 0.0;
  for (double v : f) {
    if (std::abs(v) <= floor) continue;
    const double s = v > 0.0 ? 1.0 : -1.0;
    if (last != 0.0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

GuidedMode reconstruct(const IndexProfile& p, const std::vector<Cell>& cells, std::size_t match,
                       double q, double k0, Polarization pol) {
  const bool tm = pol == Polarization::tm;
  const double dx = p.grid.dx_nm;
  std::vector<double> raw(static_cast<std::size_t>(p.grid.count), 0.0);
  std::vector<double> lsk(static_cast<std::size_t>(p.grid.count), 0.0);

  // left sweep, recording
  {
    const Cell& c0 = cells.front();
    const double g = k0 * std::sqrt(q * q - c0.n2);
    State st{1.0, g / (tm ? c0.n2 : 1.0), 0.0};
    for (std::size_t i = 0; i < match; ++i) {
      const CellPropagator prop = make_prop(cells[i], q, k0, tm);
      for (int j = 0; j < cells[i].count; ++j) {
        const double t = (j + 0.5) * dx;
        const std::size_t k = static_cast<std::size_t>(cells[i].first + j);
        raw[k] = prop.sample(t, st.u, st.w);
        lsk[k] = st.ls;
      }
      prop.advance(cells[i].width_nm, st.u, st.w);
      renormalize(st, k0);
    }
    const State stl = st;

    // right sweep, recording (samples measured from each cell's left edge)
    const Cell& cl = cells.back();
    const double gr = k0 * std::sqrt(q * q - cl.n2);
    State str{1.0, -gr / (tm ? cl.n2 : 1.0), 0.0};
    for (std::size_t i = cells.size(); i-- > match;) {
      const CellPropagator prop = make_prop(cells[i], q, k0, tm);
      for (int j = 0; j < cells[i].count; ++j) {
        const double t_back = cells[i].width_nm - (j + 0.5) * dx;
        const std::size_t k = static_cast<std::size_t>(cells[i].first + j);
        raw[k] = prop.sample(-t_back, str.u, str.w);
        lsk[k] = str.ls;
      }
      prop.advance(-cells[i].width_nm, str.u, str.w);
      renormalize(str, k0);
    }

    // glue: least-squares ratio of the left state onto the right state
    const double uw_l = stl.w / k0, uw_r = str.w / k0;
    const double denom = str.u * str.u + uw_r * uw_r;
    const double r = (stl.u * str.u + uw_l * uw_r) / denom;

    const int split = cells[match].first;  // first sample owned by the right sweep
    std::vector<double>& f = raw;
    for (int k = 0; k < p.grid.count; ++k) {
      const std::size_t ks = static_cast<std::size_t>(k);
      if (k < split)
        f[ks] = raw[ks] * std::exp(lsk[ks] - stl.ls);
      else
        f[ks] = r * raw[ks] * std::exp(lsk[ks] - str.ls);
    }
  }

  // orient and unit-normalize
  std::size_t kmax = 0;
  for (std::size_t k = 1; k < raw.size(); ++k)
    if (std::abs(raw[k]) > std::abs(raw[kmax])) kmax = k;
  if (raw[kmax] < 0.0)
    for (double& v : raw) v = -v;
  std::vector<double> f2(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) f2[k] = raw[k] * raw[k];
  const double norm = trapz(p.grid, f2);
  const double inv = 1.0 / std::sqrt(norm);
  for (double& v : raw) v *= inv;

  GuidedMode m;
  m.polarization = pol;
  m.n_eff = q;
  m.lambda_nm = p.lambda_nm;
  m.field = std::move(raw);
  m.mode_order = count_sign_changes(m.field);
  return m;
}

}  // namespace

std::vector<GuidedMode> solve_modes(const IndexProfile& profile, Polarization pol, int max_modes) {
  if (profile.grid.count < 3 || profile.n.size() != static_cast<std::size_t>(profile.grid.count))
    throw ValidationError("index profile is empty or inconsistent with its grid");
  if (profile.lambda_nm <= 0.0) throw ValidationError("profile wavelength must be positive");

  const std::vector<Cell> cells = merge_cells(profile);
  const double k0 = 2.0 * M_PI / profile.lambda_nm;
  const bool tm = pol == Polarization::tm;

  double n_max = 0.0;
  std::size_t match = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].n > n_max) {
      n_max = cells[i].n;
      match = i;
    }
  }
  const double n_floor = std::max(cells.front().n, cells.back().n);
  if (!(n_max > n_floor)) return {};

  const double q_hi = n_max - 1e-9;
  const double q_lo = n_floor + 1e-9;
  if (q_hi <= q_lo) return {};

  Shooter sh{cells, 0.0, k0, tm, match};
  auto disp = [&](double q) {
    sh.q = q;
    return sh.mismatch();
  };

  // scan downward, bisect every sign change
  std::vector<double> roots;
  double q_prev = q_hi;
  double d_prev = disp(q_prev);
  for (double q = q_hi - kScanStep; q > q_lo - kScanStep; q -= kScanStep) {
    const double qc = std::max(q, q_lo);
    double dc = disp(qc);
    if (d_prev == 0.0) {
      roots.push_back(q_prev);
    } else if (dc != 0.0 && std::signbit(dc) != std::signbit(d_prev)) {
      double a = qc, b = q_prev, da = dc, db = d_prev;
      for (int it = 0; it < 200 && (b - a) > kBisectTol; ++it) {
        const double mid = 0.5 * (a + b);
        const double dm = disp(mid);
        if (dm == 0.0) {
          a = b = mid;
          break;
        }
        if (std::signbit(dm) == std::signbit(da)) {
          a = mid;
          da = dm;
        } else {
          b = mid;
          db = dm;
        }
      }
      if ((b - a) > 10.0 * kBisectTol) {
        std::ostringstream os;
        os << "mode root finder failed to converge in n_eff interval [" << qc << ", " << q_prev
           << "]";
        throw NumericalError(os.str());
      }
      (void)db;
      roots.push_back(0.5 * (a + b));
    }
    q_prev = qc;
    d_prev = dc;
    if (qc == q_lo) break;
  }

  std::sort(roots.begin(), roots.end(), std::greater<double>());
  if (max_modes > 0 && roots.size() > static_cast<std::size_t>(max_modes))
    roots.resize(static_cast<std::size_t>(max_modes));

  std::vector<GuidedMode> modes;
  modes.reserve(roots.size());
  for (double q : roots) modes.push_back(reconstruct(profile, cells, match, q, k0, pol));
  return modes;
}

std::vector<double> reconstruct_tm_efield(const GuidedMode& mode, const IndexProfile& profile) {
  if (mode.polarization != Polarization::tm)
    throw ValidationError("reconstruct_tm_efield requires a TM mode");
  if (mode.field.size() != profile.n.size())
    throw ShapeError("mode field and profile are on different grids");
  std::vector<double> e(mode.field.size());
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = mode.field[k] / (profile.n[k] * profile.n[k]);
  return e;
}

double energy_fraction(const GuidedMode& mode, const Grid& grid, double x0_nm, double x1_nm) {
  if (mode.field.size() != static_cast<std::size_t>(grid.count))
    throw ShapeError("mode field and grid sizes differ");
  double acc = 0.0;
  for (int k = 0; k < grid.count; ++k) {
    const double x = grid.x(k);
    if (x >= x0_nm && x <= x1_nm) {
      const double v = mode.field[static_cast<std::size_t>(k)];
      acc += v * v;
    }
  }
  return acc * grid.dx_nm;
}

std::size_t select_fundamental(std::span<const GuidedMode> modes, const Grid& grid,
                               double core_x0_nm, double core_x1_nm) {
  if (modes.empty()) throw NumericalError("no guided modes to select a fundamental from");
  const std::size_t n = std::min<std::size_t>(modes.size(), 3);
  std::size_t best = 0;
  double best_frac = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = energy_fraction(modes[i], grid, core_x0_nm, core_x1_nm);
    if (frac > best_frac + 1e-12) {
      best = i;
      best_frac = frac;
    }
  }
  return best;
}

std::pair<double, double> birefringence(const IndexProfile& profile_te,
                                        const IndexProfile& profile_tm) {
  auto pick_order0 = [](const std::vector<GuidedMode>& modes, const char* what) {
    for (const GuidedMode& m : modes)
      if (m.mode_order == 0) return m.n_eff;
    throw NumericalError(std::string("no order-0 ") + what + " mode found");
  };
  auto te = solve_modes(profile_te, Polarization::te, 0);
  auto tm = solve_modes(profile_tm, Polarization::tm, 0);
  return {pick_order0(te, "TE"), pick_order0(tm, "TM")};
}

std::string mode_to_csv(const GuidedMode& mode, const Grid& grid) {
  if (mode.field.size() != static_cast<std::size_t>(grid.count))
    throw ShapeError("mode field and grid sizes differ");
  std::string out;
  char line[96];
  std::snprintf(line, sizeof line, "# lambda_nm=%.17g\n", mode.lambda_nm);
  out += line;
  out += "# polarization=" + to_string(mode.polarization) + "\n";
  std::snprintf(line, sizeof line, "# n_eff=%.17g\n# mode_order=%d\n", mode.n_eff,
                mode.mode_order);
  out += line;
  out += "x_nm,field\n";
  for (int k = 0; k < grid.count; ++k) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", grid.x(k),
                  mode.field[static_cast<std::size_t>(k)]);
    out += line;
  }
  return out;
}

}  // namespace nlwg
