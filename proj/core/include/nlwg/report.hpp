#pragma once

// Dependency-free SVG renderers for run artifacts: multi-series line plots
// and intensity heatmaps. Output is deterministic -- fixed formatting, no
// timestamps -- so seeded runs reproduce byte-identical figures.

#include <string>
#include <vector>

namespace nlwg {

struct SvgSeries {
  std::string label;
  std::string color;  // empty: taken from the default palette in order
  std::vector<double> x, y;
};

struct SvgPlotOptions {
  std::string title, x_label, y_label;
  int width = 720;
  int height = 480;
  bool log_y = false;  // non-positive samples are dropped
};

// Polyline plot with axes, ticks, and a legend; NaN samples break the line.
std::string svg_line_plot(const std::vector<SvgSeries>& series, const SvgPlotOptions& opt = {});

// Cell heatmap over uniform x/y grids; values indexed [ix * y.size() + iy].
std::string svg_heatmap(const std::vector<double>& x, const std::vector<double>& y,
                        const std::vector<double>& values, const SvgPlotOptions& opt = {});

}  // namespace nlwg
