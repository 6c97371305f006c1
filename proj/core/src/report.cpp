#include "nlwg/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "nlwg/errors.hpp"

namespace nlwg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kMarginL = 74, kMarginR = 18, kMarginT = 34, kMarginB = 50;

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

// round the raw step to the 1/2/5 decade ladder
double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  return (r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0) * mag;
}

std::string tick_label(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
  return buf;
}

struct Frame {
  double x_lo, x_hi, y_lo, y_hi;
  int px0, px1, py0, py1;  // pixel box, py0 = top
  double px(double x) const { return px0 + (x - x_lo) / (x_hi - x_lo) * (px1 - px0); }
  double py(double y) const { return py1 - (y - y_lo) / (y_hi - y_lo) * (py1 - py0); }
};

void grow(double& lo, double& hi) {
  if (!(hi > lo)) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.5;
    lo -= pad;
    hi += pad;
  }
}

std::string header(const SvgPlotOptions& opt) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                  std::to_string(opt.width) + "\" height=\"" + std::to_string(opt.height) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    s += "<text x=\"" + std::to_string(opt.width / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + opt.title + "</text>\n";
  return s;
}

std::string axes(const Frame& fr, const SvgPlotOptions& opt, bool log_y) {
  std::string s;
  s += fmt("<rect x=\"%.1f\" y=\"%.1f\" ", fr.px0, fr.py0) +
       fmt("width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n", fr.px1 - fr.px0,
           fr.py1 - fr.py0);
  const double xs = nice_step(fr.x_hi - fr.x_lo);
  for (double t = std::ceil(fr.x_lo / xs) * xs; t <= fr.x_hi + 1e-9 * xs; t += xs) {
    const double p = fr.px(t);
    s += fmt("<line x1=\"%.1f\" y1=\"%.1f\" ", p, fr.py1) +
         fmt("x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", p, fr.py1 + 5.0);
    s += fmt("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">", p, fr.py1 + 18.0) +
         tick_label(t) + "</text>\n";
  }
  if (log_y) {
    for (double e = std::ceil(fr.y_lo); e <= fr.y_hi + 1e-9; e += 1.0) {
      const double p = fr.py(e);
      s += fmt("<line x1=\"%.1f\" y1=\"%.1f\" ", fr.px0 - 5.0, p) +
           fmt("x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", fr.px0, p);
      s += fmt("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">", fr.px0 - 8.0, p + 4.0) +
           fmt("1e%+.0f", e) + "</text>\n";
    }
  } else {
    const double ys = nice_step(fr.y_hi - fr.y_lo);
    for (double t = std::ceil(fr.y_lo / ys) * ys; t <= fr.y_hi + 1e-9 * ys; t += ys) {
      const double p = fr.py(t);
      s += fmt("<line x1=\"%.1f\" y1=\"%.1f\" ", fr.px0 - 5.0, p) +
           fmt("x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", fr.px0, p);
      s += fmt("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">", fr.px0 - 8.0, p + 4.0) +
           tick_label(t) + "</text>\n";
    }
  }
  if (!opt.x_label.empty())
    s += fmt("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">", 0.5 * (fr.px0 + fr.px1),
             fr.py1 + 38.0) +
         opt.x_label + "</text>\n";
  if (!opt.y_label.empty())
    s += fmt("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" ", fr.px0 - 56.0,
             0.5 * (fr.py0 + fr.py1)) +
         fmt("transform=\"rotate(-90 %.1f %.1f)\">", fr.px0 - 56.0, 0.5 * (fr.py0 + fr.py1)) +
         opt.y_label + "</text>\n";
  return s;
}

}  // namespace

std::string svg_line_plot(const std::vector<SvgSeries>& series, const SvgPlotOptions& opt) {
  if (series.empty()) throw ValidationError("line plot needs at least one series");
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const SvgSeries& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("series x/y lengths differ");
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      double y = s.y[k];
      if (!std::isfinite(s.x[k]) || !std::isfinite(y)) continue;
      if (opt.log_y) {
        if (!(y > 0.0)) continue;
        y = std::log10(y);
      }
      x_lo = std::min(x_lo, s.x[k]);
      x_hi = std::max(x_hi, s.x[k]);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  if (!std::isfinite(x_lo) || !std::isfinite(y_lo))
    throw ValidationError("line plot has no finite samples");
  grow(x_lo, x_hi);
  grow(y_lo, y_hi);
  const double ypad = 0.05 * (y_hi - y_lo);
  y_lo -= ypad;
  y_hi += ypad;

  Frame fr{x_lo, x_hi, y_lo, y_hi, kMarginL, opt.width - kMarginR, kMarginT,
           opt.height - kMarginB};
  std::string out = header(opt) + axes(fr, opt, opt.log_y);

  for (std::size_t si = 0; si < series.size(); ++si) {
    const SvgSeries& s = series[si];
    const std::string color =
        s.color.empty() ? kPalette[si % (sizeof kPalette / sizeof kPalette[0])] : s.color;
    std::string d;
    bool pen_down = false;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      double y = s.y[k];
      const bool ok = std::isfinite(s.x[k]) && std::isfinite(y) && (!opt.log_y || y > 0.0);
      if (!ok) {
        pen_down = false;
        continue;
      }
      if (opt.log_y) y = std::log10(y);
      d += fmt(pen_down ? "L%.1f %.1f " : "M%.1f %.1f ", fr.px(s.x[k]), fr.py(y));
      pen_down = true;
    }
    if (!d.empty())
      out += "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    if (!s.label.empty()) {
      const double ly = fr.py0 + 16.0 + 16.0 * static_cast<double>(si);
      out += fmt("<line x1=\"%.1f\" y1=\"%.1f\" ", fr.px1 - 130.0, ly - 4.0) +
             fmt("x2=\"%.1f\" y2=\"%.1f\" stroke=\"", fr.px1 - 106.0, ly - 4.0) + color +
             "\" stroke-width=\"2\"/>\n";
      out += fmt("<text x=\"%.1f\" y=\"%.1f\">", fr.px1 - 100.0, ly) + s.label + "</text>\n";
    }
  }
  return out + "</svg>\n";
}

std::string svg_heatmap(const std::vector<double>& x, const std::vector<double>& y,
                        const std::vector<double>& values, const SvgPlotOptions& opt) {
  const std::size_t nx = x.size(), ny = y.size();
  if (nx < 2 || ny < 2) throw ShapeError("heatmap needs at least a 2x2 grid");
  if (values.size() != nx * ny) throw ShapeError("heatmap value count does not match the grid");

  double v_lo = std::numeric_limits<double>::infinity(), v_hi = -v_lo;
  for (double v : values)
    if (std::isfinite(v)) {
      v_lo = std::min(v_lo, v);
      v_hi = std::max(v_hi, v);
    }
  if (!std::isfinite(v_lo)) throw ValidationError("heatmap has no finite cells");
  if (!(v_hi > v_lo)) v_hi = v_lo + 1.0;

  const double dx = x[1] - x[0], dy = y[1] - y[0];
  Frame fr{x.front() - 0.5 * dx, x.back() + 0.5 * dx, y.front() - 0.5 * dy, y.back() + 0.5 * dy,
           kMarginL, opt.width - kMarginR, kMarginT, opt.height - kMarginB};

  // five-stop sequential map, dark-to-bright
  static constexpr double stops[5][3] = {{13, 8, 135},    {126, 3, 168},  {204, 71, 120},
                                         {248, 149, 64},  {240, 249, 33}};
  const auto color_of = [&](double v) {
    double t = (v - v_lo) / (v_hi - v_lo);
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const int s = std::min(3, static_cast<int>(t));
    const double f = t - s;
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                  static_cast<int>(stops[s][0] + f * (stops[s + 1][0] - stops[s][0])),
                  static_cast<int>(stops[s][1] + f * (stops[s + 1][1] - stops[s][1])),
                  static_cast<int>(stops[s][2] + f * (stops[s + 1][2] - stops[s][2])));
    return std::string(buf);
  };

  std::string out = header(opt);
  const double cw = (fr.px1 - fr.px0) / static_cast<double>(nx);
  const double ch = (fr.py1 - fr.py0) / static_cast<double>(ny);
  for (std::size_t ix = 0; ix < nx; ++ix)
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const double v = values[ix * ny + iy];
      if (!std::isfinite(v)) continue;
      out += fmt("<rect x=\"%.2f\" y=\"%.2f\" ", fr.px0 + cw * static_cast<double>(ix),
                 fr.py1 - ch * static_cast<double>(iy + 1)) +
             fmt("width=\"%.2f\" height=\"%.2f\" fill=\"", cw + 0.05, ch + 0.05) + color_of(v) +
             "\"/>\n";
    }
  out += axes(fr, opt, false);
  return out + "</svg>\n";
}

}  // namespace nlwg
