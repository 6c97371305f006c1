#pragma once

// Epitaxial-stack data model: ordered layer groups with repeat counts, the
// JSON stack-file format, and the bounded design-parameter vector.
//
// Repeated groups store their sublayer slots once; repetition is expanded
// only when flattening. The design vector therefore ties parameters across
// periods by construction (each Bragg group contributes exactly two thickness
// and two composition degrees of freedom, matching the period structure).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlwg/ad.hpp"
#include "nlwg/errors.hpp"
#include "nlwg/materials.hpp"

namespace nlwg {

enum class LayerRole { substrate, bragg_bottom, buffer, core, bragg_top, air };

std::string to_string(LayerRole role);
LayerRole layer_role_from_string(const std::string& s);

struct Sublayer {
  double thickness_nm = 0.0;  // 0 for the semi-infinite substrate/air entries
  double al_fraction = 0.0;   // ignored for air (n = 1)
};

struct LayerGroup {
  LayerRole role = LayerRole::buffer;
  int repeat = 1;
  std::vector<Sublayer> sublayers;
};

struct DesignWavelengths {
  double pump_nm = 640.0;
  double te_nm = 1092.0;
  double tm_nm = 1550.0;
};

struct EpitaxialStack {
  DesignWavelengths design_wavelengths;
  std::vector<LayerGroup> groups;  // substrate first, air last
};

// Structural validation (ordering, positivity, composition range); when
// check_transparency is set, every interior sublayer must pass is_transparent
// at the pump wavelength.
void validate_stack(const EpitaxialStack& stack, bool check_transparency = true,
                    double margin_ev = 0.050);

EpitaxialStack parse_stack(const std::string& json_text);
std::string serialize_stack(const EpitaxialStack& stack);  // canonical: 2-space, fixed key order
EpitaxialStack load_stack_file(const std::string& path);
void write_stack_file(const std::string& path, const EpitaxialStack& stack);

// Sum over flattened interior layers (substrate and air excluded).
double total_thickness(const EpitaxialStack& stack);

// Interior layers with repeats expanded, substrate to air.
struct FlatLayer {
  double thickness_nm;
  double al_fraction;
  LayerRole role;
};
std::vector<FlatLayer> flatten(const EpitaxialStack& stack);

// --- design vector ------------------------------------------------------------

struct BoundsConfig {
  double al_lo = 0.50;  // pump-transparency floor
  double al_hi = 0.90;  // oxidation practice ceiling
  double thickness_lo_nm = 20.0;
  double thickness_hi_nm = 200.0;
};

struct ParamBinding {
  enum class Field : std::uint8_t { thickness, al_fraction };
  int group;  // index into EpitaxialStack::groups
  int sublayer;
  Field field;
};

// Flattened per-layer values in scalar type T; repeated periods reference the
// same underlying value, so a Var-typed expansion keeps tied parameters tied
// on the tape.
template <class T>
struct FlatStackT {
  std::vector<T> thickness_nm;
  std::vector<T> al_fraction;
  std::vector<LayerRole> role;
  double substrate_al = 0.0;
};

// Maps unconstrained reals onto bounded stack parameters via logistic
// squashing; one entry per (interior group, sublayer slot, field).
class DesignSpace {
 public:
  static DesignSpace create(const EpitaxialStack& reference, const BoundsConfig& bounds = {});

  std::size_t size() const { return binding_.size(); }
  const std::vector<ParamBinding>& binding() const { return binding_; }
  const std::vector<std::pair<double, double>>& bounds() const { return bounds_; }
  const EpitaxialStack& skeleton() const { return skeleton_; }

  // logit of the bound-relative position, clamped so the round trip is exact
  // to ~1e-13 relative even for values sitting on a bound
  std::vector<double> encode(const EpitaxialStack& stack) const;
  EpitaxialStack decode(std::span<const double> values) const;

  template <class T>
  FlatStackT<T> decode_flat(std::span<const T> values) const;

 private:
  EpitaxialStack skeleton_;
  std::vector<ParamBinding> binding_;
  std::vector<std::pair<double, double>> bounds_;
};

// Numerically stable logistic squash onto (lo, hi).
template <class T>
T squash(const T& u, double lo, double hi) {
  using std::exp;
  using ad::exp;
  T s(0.0);
  if (val(u) >= 0.0) {
    T t = exp(-u);
    s = 1.0 / (1.0 + t);
  } else {
    T t = exp(u);
    s = t / (1.0 + t);
  }
  return lo + (hi - lo) * s;
}

double unsquash(double value, double lo, double hi);  // clamped logit

template <class T>
FlatStackT<T> DesignSpace::decode_flat(std::span<const T> values) const {
  if (values.size() != binding_.size())
    throw ShapeError("design vector length " + std::to_string(values.size()) +
                     " != parameter count " + std::to_string(binding_.size()));
  // squash each bound parameter once, then expand repeats sharing the result
  struct Slot {
    T thickness{}, al{};
  };
  std::vector<std::vector<Slot>> slots(skeleton_.groups.size());
  for (std::size_t g = 0; g < skeleton_.groups.size(); ++g)
    slots[g].resize(skeleton_.groups[g].sublayers.size());
  for (std::size_t k = 0; k < binding_.size(); ++k) {
    const ParamBinding& b = binding_[k];
    const auto [lo, hi] = bounds_[k];
    T v = squash(values[k], lo, hi);
    if (b.field == ParamBinding::Field::thickness)
      slots[static_cast<std::size_t>(b.group)][static_cast<std::size_t>(b.sublayer)].thickness = v;
    else
      slots[static_cast<std::size_t>(b.group)][static_cast<std::size_t>(b.sublayer)].al = v;
  }
  FlatStackT<T> flat;
  flat.substrate_al = skeleton_.groups.front().sublayers.front().al_fraction;
  for (std::size_t g = 1; g + 1 < skeleton_.groups.size(); ++g) {
    const LayerGroup& grp = skeleton_.groups[g];
    for (int r = 0; r < grp.repeat; ++r)
      for (std::size_t s = 0; s < grp.sublayers.size(); ++s) {
        flat.thickness_nm.push_back(slots[g][s].thickness);
        flat.al_fraction.push_back(slots[g][s].al);
        flat.role.push_back(grp.role);
      }
  }
  return flat;
}

}  // namespace nlwg
