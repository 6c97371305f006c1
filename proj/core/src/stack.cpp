#include "nlwg/stack.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace nlwg {

using ordered_json = nlohmann::ordered_json;

std::string to_string(LayerRole role) {
  switch (role) {
    case LayerRole::substrate: return "substrate";
    case LayerRole::bragg_bottom: return "bragg_bottom";
    case LayerRole::buffer: return "buffer";
    case LayerRole::core: return "core";
    case LayerRole::bragg_top: return "bragg_top";
    case LayerRole::air: return "air";
  }
  throw Error("unreachable layer role");
}

LayerRole layer_role_from_string(const std::string& s) {
  if (s == "substrate") return LayerRole::substrate;
  if (s == "bragg_bottom") return LayerRole::bragg_bottom;
  if (s == "buffer") return LayerRole::buffer;
  if (s == "core") return LayerRole::core;
  if (s == "bragg_top") return LayerRole::bragg_top;
  if (s == "air") return LayerRole::air;
  throw ValidationError("unknown layer role '" + s + "'");
}

namespace {

std::string group_label(const EpitaxialStack& stack, std::size_t g) {
  std::ostringstream os;
  os << "group " << g << " (" << to_string(stack.groups[g].role) << ")";
  return os.str();
}

}  // namespace

void validate_stack(const EpitaxialStack& stack, bool check_transparency, double margin_ev) {
  const auto& w = stack.design_wavelengths;
  if (!(w.pump_nm > 0.0 && w.te_nm > 0.0 && w.tm_nm > 0.0))
    throw ValidationError("design wavelengths must be positive");
  if (stack.groups.size() < 3)
    throw ValidationError("stack needs at least substrate, one interior layer, and air");
  if (stack.groups.front().role != LayerRole::substrate)
    throw ValidationError("first group must be the substrate");
  if (stack.groups.back().role != LayerRole::air) throw ValidationError("last group must be air");

  for (std::size_t g = 0; g < stack.groups.size(); ++g) {
    const LayerGroup& grp = stack.groups[g];
    const bool exterior = grp.role == LayerRole::substrate || grp.role == LayerRole::air;
    if (exterior && g != 0 && g + 1 != stack.groups.size())
      throw ValidationError(group_label(stack, g) + ": substrate/air only at the stack ends");
    if (grp.repeat < 1)
      throw ValidationError(group_label(stack, g) + ": repeat must be >= 1");
    if (grp.sublayers.empty())
      throw ValidationError(group_label(stack, g) + ": needs at least one sublayer");
    if (exterior && (grp.repeat != 1 || grp.sublayers.size() != 1))
      throw ValidationError(group_label(stack, g) + ": semi-infinite media take one sublayer");
    for (std::size_t s = 0; s < grp.sublayers.size(); ++s) {
      const Sublayer& sub = grp.sublayers[s];
      std::ostringstream where;
      where << group_label(stack, g) << " sublayer " << s;
      if (sub.al_fraction < 0.0 || sub.al_fraction > 1.0)
        throw ValidationError(where.str() + ": Al fraction " + std::to_string(sub.al_fraction) +
                              " outside [0, 1]");
      if (exterior) {
        if (sub.thickness_nm != 0.0)
          throw ValidationError(where.str() +
                                ": substrate/air are semi-infinite; set thickness_nm to 0");
        continue;
      }
      if (!(sub.thickness_nm > 0.0))
        throw ValidationError(where.str() + ": thickness " + std::to_string(sub.thickness_nm) +
                              " must be > 0");
      if (check_transparency && !is_transparent(sub.al_fraction, w.pump_nm, margin_ev)) {
        std::ostringstream os;
        os << where.str() << ": Al fraction " << sub.al_fraction << " absorbs at the pump ("
           << w.pump_nm << " nm)";
        throw ConstraintError(os.str());
      }
    }
  }
}

namespace {

const ordered_json& need(const ordered_json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError("missing field " + path + "/" + key);
  return *it;
}

double need_number(const ordered_json& j, const char* key, const std::string& path) {
  const ordered_json& v = need(j, key, path);
  if (!v.is_number()) throw ValidationError("field " + path + "/" + key + " must be a number");
  return v.get<double>();
}

}  // namespace

EpitaxialStack parse_stack(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw ValidationError(std::string("stack document is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("stack document root must be an object");

  EpitaxialStack stack;
  const ordered_json& wl = need(j, "design_wavelengths_nm", "");
  stack.design_wavelengths.pump_nm = need_number(wl, "pump", "/design_wavelengths_nm");
  stack.design_wavelengths.te_nm = need_number(wl, "te", "/design_wavelengths_nm");
  stack.design_wavelengths.tm_nm = need_number(wl, "tm", "/design_wavelengths_nm");

  const ordered_json& groups = need(j, "groups", "");
  if (!groups.is_array()) throw ValidationError("field /groups must be an array");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::string gpath = "/groups/" + std::to_string(g);
    const ordered_json& jg = groups[g];
    if (!jg.is_object()) throw ValidationError("field " + gpath + " must be an object");
    LayerGroup grp;
    const ordered_json& role = need(jg, "role", gpath);
    if (!role.is_string()) throw ValidationError("field " + gpath + "/role must be a string");
    grp.role = layer_role_from_string(role.get<std::string>());
    const ordered_json& rep = need(jg, "repeat", gpath);
    if (!rep.is_number_integer())
      throw ValidationError("field " + gpath + "/repeat must be an integer");
    grp.repeat = rep.get<int>();
    const ordered_json& subs = need(jg, "sublayers", gpath);
    if (!subs.is_array()) throw ValidationError("field " + gpath + "/sublayers must be an array");
    for (std::size_t s = 0; s < subs.size(); ++s) {
      const std::string spath = gpath + "/sublayers/" + std::to_string(s);
      const ordered_json& js = subs[s];
      if (!js.is_object()) throw ValidationError("field " + spath + " must be an object");
      Sublayer sub;
      sub.thickness_nm = need_number(js, "thickness_nm", spath);
      sub.al_fraction = need_number(js, "al_fraction", spath);
      grp.sublayers.push_back(sub);
    }
    stack.groups.push_back(std::move(grp));
  }
  validate_stack(stack, /*check_transparency=*/false);
  return stack;
}

std::string serialize_stack(const EpitaxialStack& stack) {
  ordered_json j;
  j["design_wavelengths_nm"] = {{"pump", stack.design_wavelengths.pump_nm},
                                {"te", stack.design_wavelengths.te_nm},
                                {"tm", stack.design_wavelengths.tm_nm}};
  ordered_json groups = ordered_json::array();
  for (const LayerGroup& grp : stack.groups) {
    ordered_json jg;
    jg["role"] = to_string(grp.role);
    jg["repeat"] = grp.repeat;
    ordered_json subs = ordered_json::array();
    for (const Sublayer& sub : grp.sublayers)
      subs.push_back({{"thickness_nm", sub.thickness_nm}, {"al_fraction", sub.al_fraction}});
    jg["sublayers"] = std::move(subs);
    groups.push_back(std::move(jg));
  }
  j["groups"] = std::move(groups);
  return j.dump(2) + "\n";
}

EpitaxialStack load_stack_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open stack file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_stack(buf.str());
}

void write_stack_file(const std::string& path, const EpitaxialStack& stack) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write stack file '" + path + "'");
  out << serialize_stack(stack);
}

double total_thickness(const EpitaxialStack& stack) {
  double sum = 0.0;
  for (const LayerGroup& grp : stack.groups) {
    if (grp.role == LayerRole::substrate || grp.role == LayerRole::air) continue;
    double period = 0.0;
    for (const Sublayer& sub : grp.sublayers) period += sub.thickness_nm;
    sum += grp.repeat * period;
  }
  return sum;
}

std::vector<FlatLayer> flatten(const EpitaxialStack& stack) {
  std::vector<FlatLayer> out;
  for (const LayerGroup& grp : stack.groups) {
    if (grp.role == LayerRole::substrate || grp.role == LayerRole::air) continue;
    for (int r = 0; r < grp.repeat; ++r)
      for (const Sublayer& sub : grp.sublayers)
        out.push_back({sub.thickness_nm, sub.al_fraction, grp.role});
  }
  return out;
}

DesignSpace DesignSpace::create(const EpitaxialStack& reference, const BoundsConfig& cfg) {
  validate_stack(reference, /*check_transparency=*/false);
  if (!(cfg.al_lo < cfg.al_hi) || !(cfg.thickness_lo_nm < cfg.thickness_hi_nm))
    throw ValidationError("design bounds must satisfy lo < hi");
  DesignSpace space;
  space.skeleton_ = reference;
  for (std::size_t g = 1; g + 1 < reference.groups.size(); ++g) {
    const LayerGroup& grp = reference.groups[g];
    for (std::size_t s = 0; s < grp.sublayers.size(); ++s) {
      space.binding_.push_back(
          {static_cast<int>(g), static_cast<int>(s), ParamBinding::Field::thickness});
      space.bounds_.push_back({cfg.thickness_lo_nm, cfg.thickness_hi_nm});
      space.binding_.push_back(
          {static_cast<int>(g), static_cast<int>(s), ParamBinding::Field::al_fraction});
      space.bounds_.push_back({cfg.al_lo, cfg.al_hi});
    }
  }
  return space;
}

double unsquash(double value, double lo, double hi) {
  double t = (value - lo) / (hi - lo);
  constexpr double kEdge = 1e-15;  // keeps decode(encode(.)) within ~1e-13 relative at the bounds
  if (t < kEdge) t = kEdge;
  if (t > 1.0 - kEdge) t = 1.0 - kEdge;
  return std::log(t / (1.0 - t));
}

std::vector<double> DesignSpace::encode(const EpitaxialStack& stack) const {
  if (stack.groups.size() != skeleton_.groups.size())
    throw ShapeError("stack layout does not match this design space");
  for (std::size_t g = 0; g < stack.groups.size(); ++g) {
    const LayerGroup& a = stack.groups[g];
    const LayerGroup& b = skeleton_.groups[g];
    if (a.role != b.role || a.repeat != b.repeat || a.sublayers.size() != b.sublayers.size())
      throw ShapeError("stack layout does not match this design space");
  }
  std::vector<double> v(binding_.size());
  for (std::size_t k = 0; k < binding_.size(); ++k) {
    const ParamBinding& b = binding_[k];
    const Sublayer& sub =
        stack.groups[static_cast<std::size_t>(b.group)].sublayers[static_cast<std::size_t>(b.sublayer)];
    const double value =
        b.field == ParamBinding::Field::thickness ? sub.thickness_nm : sub.al_fraction;
    const auto [lo, hi] = bounds_[k];
    if (value < lo - 1e-9 || value > hi + 1e-9) {
      std::ostringstream os;
      os << "value " << value << " outside design bound [" << lo << ", " << hi << "] for group "
         << b.group << " sublayer " << b.sublayer << " "
         << (b.field == ParamBinding::Field::thickness ? "thickness" : "al_fraction");
      throw ValidationError(os.str());
    }
    v[k] = unsquash(value, lo, hi);
  }
  return v;
}

EpitaxialStack DesignSpace::decode(std::span<const double> values) const {
  if (values.size() != binding_.size())
    throw ShapeError("design vector length " + std::to_string(values.size()) +
                     " != parameter count " + std::to_string(binding_.size()));
  EpitaxialStack stack = skeleton_;
  for (std::size_t k = 0; k < binding_.size(); ++k) {
    const ParamBinding& b = binding_[k];
    const auto [lo, hi] = bounds_[k];
    Sublayer& sub =
        stack.groups[static_cast<std::size_t>(b.group)].sublayers[static_cast<std::size_t>(b.sublayer)];
    const double value = squash(values[k], lo, hi);
    if (b.field == ParamBinding::Field::thickness)
      sub.thickness_nm = value;
    else
      sub.al_fraction = value;
  }
  return stack;
}

}  // namespace nlwg
