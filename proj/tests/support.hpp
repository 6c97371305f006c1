#pragma once

#include <nlwg/stack.hpp>

namespace nlwg::test {

// The reference epitaxial design shipped with the toolkit: a vertical
// microcavity whose guided TE (1092 nm) and TM (1550 nm) modes are pumped
// through the top 36-period Bragg mirror at ~640.65 nm.
inline EpitaxialStack reference_stack() {
  EpitaxialStack s;
  s.design_wavelengths.pump_nm = 1092.0 * 1550.0 / (1092.0 + 1550.0);
  s.design_wavelengths.te_nm = 1092.0;
  s.design_wavelengths.tm_nm = 1550.0;
  s.groups = {
      {LayerRole::substrate, 1, {{0.0, 0.0}}},
      {LayerRole::bragg_bottom, 48, {{48.4, 0.90}, {58.6, 0.60}}},
      {LayerRole::buffer, 1, {{120.7, 0.90}}},
      {LayerRole::core, 4, {{91.7, 0.50}, {96.4, 0.80}}},
      {LayerRole::buffer, 1, {{120.7, 0.90}}},
      {LayerRole::bragg_top, 36, {{58.6, 0.60}, {48.4, 0.90}}},
      {LayerRole::air, 1, {{0.0, 0.0}}},
  };
  return s;
}

}  // namespace nlwg::test
