#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "atecr/errors.hpp"

namespace atecr {

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace svg_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                 "#8c564b", "#17becf", "#7f7f7f"};
  return colors[i % 8];
}

struct Axis {
  double lo = 0.0, hi = 1.0;

  void expand(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

// Round tick spacing to a 1/2/5 decade.
inline double tick_step(double span) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  if (r < 1.5) return mag;
  if (r < 3.5) return 2.0 * mag;
  if (r < 7.5) return 5.0 * mag;
  return 10.0 * mag;
}

inline void frame(std::string& out, double w, double h, double ml, double mr, double mt,
                  double mb, const Axis& ax, const Axis& ay, const std::string& title,
                  const std::string& xlabel, const std::string& ylabel) {
  const double px0 = ml, px1 = w - mr, py0 = h - mb, py1 = mt;
  out += "<rect x='" + num(px0) + "' y='" + num(py1) + "' width='" + num(px1 - px0) +
         "' height='" + num(py0 - py1) + "' fill='none' stroke='#333'/>\n";
  out += "<text x='" + num(w / 2) + "' y='18' text-anchor='middle' font-size='14'>" + title +
         "</text>\n";
  out += "<text x='" + num(w / 2) + "' y='" + num(h - 6) +
         "' text-anchor='middle' font-size='11'>" + xlabel + "</text>\n";
  out += "<text x='14' y='" + num(h / 2) + "' text-anchor='middle' font-size='11' transform='rotate(-90 14 " +
         num(h / 2) + ")'>" + ylabel + "</text>\n";
  const double sx = tick_step(ax.hi - ax.lo);
  for (double t = std::ceil(ax.lo / sx) * sx; t <= ax.hi + 1e-12; t += sx) {
    const double px = px0 + (t - ax.lo) / (ax.hi - ax.lo) * (px1 - px0);
    out += "<line x1='" + num(px) + "' y1='" + num(py0) + "' x2='" + num(px) + "' y2='" +
           num(py0 + 4) + "' stroke='#333'/>\n";
    out += "<text x='" + num(px) + "' y='" + num(py0 + 16) +
           "' text-anchor='middle' font-size='10'>" + num(t) + "</text>\n";
  }
  const double sy = tick_step(ay.hi - ay.lo);
  for (double t = std::ceil(ay.lo / sy) * sy; t <= ay.hi + 1e-12; t += sy) {
    const double py = py0 - (t - ay.lo) / (ay.hi - ay.lo) * (py0 - py1);
    out += "<line x1='" + num(px0 - 4) + "' y1='" + num(py) + "' x2='" + num(px0) + "' y2='" +
           num(py) + "' stroke='#333'/>\n";
    out += "<text x='" + num(px0 - 6) + "' y='" + num(py + 3) +
           "' text-anchor='end' font-size='10'>" + num(t) + "</text>\n";
  }
}

inline void legend(std::string& out, const std::vector<SvgSeries>& series, double x, double y) {
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double ly = y + 16.0 * static_cast<double>(s);
    out += "<line x1='" + num(x) + "' y1='" + num(ly) + "' x2='" + num(x + 18) + "' y2='" +
           num(ly) + "' stroke='" + palette(s) + "' stroke-width='2'/>\n";
    out += "<text x='" + num(x + 24) + "' y='" + num(ly + 4) + "' font-size='11'>" +
           series[s].name + "</text>\n";
  }
}

}  // namespace svg_detail

// Multi-series line chart (e.g. coverage against sample size, one line per
// method). Optionally draws a dashed horizontal reference line.
inline std::string svg_line_chart(const std::string& title, const std::string& xlabel,
                                  const std::string& ylabel,
                                  const std::vector<SvgSeries>& series,
                                  double reference_y = std::nan("")) {
  if (series.empty()) throw DomainError("svg_line_chart: no series");
  const double w = 560, h = 360, ml = 56, mr = 160, mt = 32, mb = 44;
  svg_detail::Axis ax{series[0].x.empty() ? 0.0 : series[0].x[0],
                      series[0].x.empty() ? 1.0 : series[0].x[0]};
  svg_detail::Axis ay{std::isnan(reference_y) ? 1e300 : reference_y,
                      std::isnan(reference_y) ? -1e300 : reference_y};
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DomainError("svg_line_chart: x/y length mismatch");
    for (double v : s.x) ax.expand(v);
    for (double v : s.y) ay.expand(v);
  }
  if (!(ax.hi > ax.lo)) ax.hi = ax.lo + 1.0;
  if (!(ay.hi > ay.lo)) ay.hi = ay.lo + 1.0;
  const double pad = 0.05 * (ay.hi - ay.lo);
  ay.lo -= pad;
  ay.hi += pad;

  std::string out = "<svg xmlns='http://www.w3.org/2000/svg' width='" + svg_detail::num(w) +
                    "' height='" + svg_detail::num(h) + "' font-family='sans-serif'>\n";
  svg_detail::frame(out, w, h, ml, mr, mt, mb, ax, ay, title, xlabel, ylabel);
  auto px = [&](double v) { return ml + (v - ax.lo) / (ax.hi - ax.lo) * (w - mr - ml); };
  auto py = [&](double v) { return (h - mb) - (v - ay.lo) / (ay.hi - ay.lo) * (h - mb - mt); };
  if (!std::isnan(reference_y)) {
    out += "<line x1='" + svg_detail::num(px(ax.lo)) + "' y1='" + svg_detail::num(py(reference_y)) +
           "' x2='" + svg_detail::num(px(ax.hi)) + "' y2='" + svg_detail::num(py(reference_y)) +
           "' stroke='#999' stroke-dasharray='5,4'/>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::string pts;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      pts += svg_detail::num(px(series[s].x[i])) + "," + svg_detail::num(py(series[s].y[i])) + " ";
    }
    out += "<polyline points='" + pts + "' fill='none' stroke='" + svg_detail::palette(s) +
           "' stroke-width='2'/>\n";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      out += "<circle cx='" + svg_detail::num(px(series[s].x[i])) + "' cy='" +
             svg_detail::num(py(series[s].y[i])) + "' r='2.5' fill='" + svg_detail::palette(s) +
             "'/>\n";
    }
  }
  svg_detail::legend(out, series, w - mr + 12, mt + 12);
  out += "</svg>\n";
  return out;
}

// Grouped bar chart (e.g. mean width or total time per method, grouped by n).
inline std::string svg_bar_chart(const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel,
                                 const std::vector<std::string>& group_labels,
                                 const std::vector<SvgSeries>& series) {
  if (series.empty()) throw DomainError("svg_bar_chart: no series");
  const double w = 560, h = 360, ml = 56, mr = 160, mt = 32, mb = 44;
  svg_detail::Axis ay{0.0, 0.0};
  for (const auto& s : series) {
    if (s.y.size() != group_labels.size()) throw DomainError("svg_bar_chart: group mismatch");
    for (double v : s.y) ay.expand(v);
  }
  if (!(ay.hi > ay.lo)) ay.hi = ay.lo + 1.0;
  svg_detail::Axis ax{0.0, static_cast<double>(group_labels.size())};

  std::string out = "<svg xmlns='http://www.w3.org/2000/svg' width='" + svg_detail::num(w) +
                    "' height='" + svg_detail::num(h) + "' font-family='sans-serif'>\n";
  svg_detail::frame(out, w, h, ml, mr, mt, mb, ax, ay, title, xlabel, ylabel);
  auto py = [&](double v) { return (h - mb) - (v - ay.lo) / (ay.hi - ay.lo) * (h - mb - mt); };
  const double group_w = (w - mr - ml) / static_cast<double>(group_labels.size());
  const double bar_w = 0.8 * group_w / static_cast<double>(series.size());
  for (std::size_t g = 0; g < group_labels.size(); ++g) {
    const double gx = ml + group_w * (static_cast<double>(g) + 0.1);
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double x = gx + bar_w * static_cast<double>(s);
      const double top = py(series[s].y[g]);
      out += "<rect x='" + svg_detail::num(x) + "' y='" + svg_detail::num(top) + "' width='" +
             svg_detail::num(bar_w * 0.92) + "' height='" + svg_detail::num(py(0.0) - top) +
             "' fill='" + svg_detail::palette(s) + "'/>\n";
    }
    out += "<text x='" + svg_detail::num(ml + group_w * (static_cast<double>(g) + 0.5)) +
           "' y='" + svg_detail::num(h - mb + 16) + "' text-anchor='middle' font-size='10'>" +
           group_labels[g] + "</text>\n";
  }
  svg_detail::legend(out, series, w - mr + 12, mt + 12);
  out += "</svg>\n";
  return out;
}

}  // namespace atecr
