#pragma once

// Minimal static line charts written as SVG polylines.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "ftmpc/common.hpp"

namespace ftmpc::cli {

struct Series {
  std::string label;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

/// Shaded region between two curves sharing the chart's x samples.
struct Band {
  std::vector<double> lower;
  std::vector<double> upper;
  std::string color = "#1f77b4";
};

struct Chart {
  std::string title;
  std::string x_label = "t [s]";
  std::string y_label;
  std::vector<double> x;
  std::vector<Series> series{};
  std::vector<Band> bands{};
  std::vector<double> h_lines{};  // horizontal guides, e.g. a threshold
  double width = 900.0;
  double height = 320.0;

  struct Range {
    double lo, hi;
  };

  Range x_range() const {
    if (x.empty()) throw Error("chart '" + title + "' has no samples");
    return {x.front(), x.back() > x.front() ? x.back() : x.front() + 1.0};
  }

  Range y_range() const {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    const auto scan = [&](const std::vector<double>& v) {
      for (double y : v)
        if (std::isfinite(y)) lo = std::min(lo, y), hi = std::max(hi, y);
    };
    for (const auto& s : series) scan(s.y);
    for (const auto& b : bands) scan(b.lower), scan(b.upper);
    scan(h_lines);
    if (!std::isfinite(lo)) return {0.0, 1.0};
    if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
  }
};

namespace svg_detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace svg_detail

inline void write_svg(std::ostream& os, const Chart& c) {
  using svg_detail::fmt;
  const double ml = 70, mr = 150, mt = 30, mb = 45;
  const double pw = c.width - ml - mr, ph = c.height - mt - mb;
  const auto xr = c.x_range();
  const auto yr = c.y_range();
  const auto px = [&](double x) { return ml + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  const auto py = [&](double y) { return mt + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(c.width) << "\" height=\"" << fmt(c.height)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << fmt(ml) << "\" y=\"18\" font-size=\"13\">" << svg_detail::escape(c.title) << "</text>\n";
  os << "<rect x=\"" << fmt(ml) << "\" y=\"" << fmt(mt) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
     << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / 5.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    os << "<line x1=\"" << fmt(px(xv)) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\"" << fmt(px(xv)) << "\" y2=\""
       << fmt(mt + ph + 4) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << fmt(mt + ph + 16) << "\" text-anchor=\"middle\">"
       << svg_detail::tick(xv) << "</text>\n";
    os << "<line x1=\"" << fmt(ml - 4) << "\" y1=\"" << fmt(py(yv)) << "\" x2=\"" << fmt(ml + pw) << "\" y2=\""
       << fmt(py(yv)) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << fmt(ml - 6) << "\" y=\"" << fmt(py(yv) + 4) << "\" text-anchor=\"end\">"
       << svg_detail::tick(yv) << "</text>\n";
  }
  os << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(c.height - 8) << "\" text-anchor=\"middle\">"
     << svg_detail::escape(c.x_label) << "</text>\n";
  os << "<text x=\"14\" y=\"" << fmt(mt + ph / 2) << "\" transform=\"rotate(-90 14 " << fmt(mt + ph / 2)
     << ")\" text-anchor=\"middle\">" << svg_detail::escape(c.y_label) << "</text>\n";

  for (const auto& b : c.bands) {
    os << "<polygon fill=\"" << b.color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < c.x.size() && i < b.upper.size(); ++i)
      os << fmt(px(c.x[i])) << ',' << fmt(py(b.upper[i])) << ' ';
    for (std::size_t i = std::min(c.x.size(), b.lower.size()); i-- > 0;)
      os << fmt(px(c.x[i])) << ',' << fmt(py(b.lower[i])) << ' ';
    os << "\"/>\n";
  }
  for (double h : c.h_lines)
    os << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(py(h)) << "\" x2=\"" << fmt(ml + pw) << "\" y2=\""
       << fmt(py(h)) << "\" stroke=\"#d62728\" stroke-dasharray=\"4 3\"/>\n";

  for (std::size_t k = 0; k < c.series.size(); ++k) {
    const auto& s = c.series[k];
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\""
       << (s.dashed ? " stroke-dasharray=\"6 3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < c.x.size() && i < s.y.size(); ++i)
      os << fmt(px(c.x[i])) << ',' << fmt(py(s.y[i])) << ' ';
    os << "\"/>\n";
    const double ly = mt + 12 + 16.0 * static_cast<double>(k);
    os << "<line x1=\"" << fmt(ml + pw + 10) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(ml + pw + 30)
       << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << s.color << "\"" << (s.dashed ? " stroke-dasharray=\"6 3\"" : "")
       << "/>\n";
    os << "<text x=\"" << fmt(ml + pw + 35) << "\" y=\"" << fmt(ly + 4) << "\">" << svg_detail::escape(s.label)
       << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace ftmpc::cli
