#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "bimodec/core/error.hpp"
#include "bimodec/eval/report.hpp"

/// Minimal grouped bar chart writer. Output depends only on the inputs.
namespace bimodec::io {

struct BarSeries {
  std::string name;
  std::vector<double> values;  ///< one per category
  std::vector<double> errors;  ///< optional +- bars, same length or empty
  std::string color = "#4477aa";
  bool hatched = false;  ///< drawn with diagonal cross-hatching
};

struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> categories;
  std::vector<BarSeries> series;
  std::vector<std::pair<double, std::string>> reference_lines;  ///< dashed horizontal lines
  double width = 720.0;
  double height = 400.0;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Rounded step for about five ticks.
inline double tick_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace detail

inline std::string render_bar_chart(const BarChart& c) {
  using detail::fmt;
  if (c.categories.empty() || c.series.empty()) throw DataError("svg: chart needs categories and series");
  double lo = 0.0, hi = 0.0;
  for (const auto& s : c.series) {
    if (s.values.size() != c.categories.size()) throw ShapeError("svg: series '" + s.name + "' has the wrong number of values");
    if (!s.errors.empty() && s.errors.size() != s.values.size()) throw ShapeError("svg: series '" + s.name + "' has the wrong number of errors");
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const double e = s.errors.empty() ? 0.0 : std::abs(s.errors[i]);
      if (!std::isfinite(s.values[i]) || !std::isfinite(e)) throw NumericError("svg: non-finite value in series '" + s.name + "'");
      lo = std::min(lo, s.values[i] - e);
      hi = std::max(hi, s.values[i] + e);
    }
  }
  for (const auto& r : c.reference_lines) {
    lo = std::min(lo, r.first);
    hi = std::max(hi, r.first);
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double step = detail::tick_step(hi - lo);
  lo = std::floor(lo / step) * step;
  hi = std::ceil(hi / step) * step;

  const double left = 64.0, right = 150.0, top = 40.0, bottom = 56.0;
  const double pw = c.width - left - right, ph = c.height - top - bottom;
  auto y_of = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(c.width) + "\" height=\"" + fmt(c.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<defs>\n";
  for (std::size_t k = 0; k < c.series.size(); ++k) {
    if (!c.series[k].hatched) continue;
    const auto& col = c.series[k].color;
    s += "<pattern id=\"hatch" + std::to_string(k) + "\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\">";
    s += "<rect width=\"6\" height=\"6\" fill=\"white\"/><path d=\"M0,6 L6,0 M0,0 L6,6\" stroke=\"" + col + "\" stroke-width=\"1.2\"/></pattern>\n";
  }
  s += "</defs>\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(c.width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + detail::escape(c.title) + "</text>\n";

  for (double v = lo; v <= hi + step * 1e-6; v += step) {
    const double y = y_of(v);
    s += "<line x1=\"" + fmt(left) + "\" x2=\"" + fmt(left + pw) + "\" y1=\"" + fmt(y) + "\" y2=\"" + fmt(y) + "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + fmt(left - 6) + "\" y=\"" + fmt(y + 4) + "\" text-anchor=\"end\">" + fmt(v) + "</text>\n";
  }
  s += "<line x1=\"" + fmt(left) + "\" x2=\"" + fmt(left + pw) + "\" y1=\"" + fmt(y_of(0)) + "\" y2=\"" + fmt(y_of(0)) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(left) + "\" x2=\"" + fmt(left) + "\" y1=\"" + fmt(top) + "\" y2=\"" + fmt(top + ph) + "\" stroke=\"black\"/>\n";
  s += "<text transform=\"translate(16," + fmt(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" + detail::escape(c.y_label) + "</text>\n";

  const double slot = pw / static_cast<double>(c.categories.size());
  const double bw = slot * 0.8 / static_cast<double>(c.series.size());
  for (std::size_t i = 0; i < c.categories.size(); ++i) {
    const double x0 = left + slot * static_cast<double>(i) + slot * 0.1;
    for (std::size_t k = 0; k < c.series.size(); ++k) {
      const auto& ser = c.series[k];
      const double v = ser.values[i];
      const double x = x0 + bw * static_cast<double>(k);
      const double y = std::min(y_of(v), y_of(0)), h = std::abs(y_of(v) - y_of(0));
      const std::string fill = ser.hatched ? "url(#hatch" + std::to_string(k) + ")" : ser.color;
      s += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(bw * 0.92) + "\" height=\"" + fmt(h) + "\" fill=\"" + fill + "\" stroke=\"" + ser.color + "\"><title>" +
           detail::escape(ser.name + " / " + c.categories[i] + ": " + fmt(v)) + "</title></rect>\n";
      if (!ser.errors.empty()) {
        const double cx = x + bw * 0.46, e = std::abs(ser.errors[i]);
        s += "<line x1=\"" + fmt(cx) + "\" x2=\"" + fmt(cx) + "\" y1=\"" + fmt(y_of(v - e)) + "\" y2=\"" + fmt(y_of(v + e)) + "\" stroke=\"black\"/>\n";
      }
    }
    s += "<text x=\"" + fmt(left + slot * (static_cast<double>(i) + 0.5)) + "\" y=\"" + fmt(top + ph + 18) + "\" text-anchor=\"middle\">" + detail::escape(c.categories[i]) + "</text>\n";
  }
  for (const auto& [v, label] : c.reference_lines) {
    s += "<line x1=\"" + fmt(left) + "\" x2=\"" + fmt(left + pw) + "\" y1=\"" + fmt(y_of(v)) + "\" y2=\"" + fmt(y_of(v)) + "\" stroke=\"#888888\" stroke-dasharray=\"5,4\"/>\n";
    s += "<text x=\"" + fmt(left + pw + 4) + "\" y=\"" + fmt(y_of(v) + 4) + "\" fill=\"#666666\">" + detail::escape(label) + "</text>\n";
  }
  for (std::size_t k = 0; k < c.series.size(); ++k) {
    const auto& ser = c.series[k];
    const double y = top + 18.0 * static_cast<double>(k);
    const std::string fill = ser.hatched ? "url(#hatch" + std::to_string(k) + ")" : ser.color;
    s += "<rect x=\"" + fmt(left + pw + 40) + "\" y=\"" + fmt(y) + "\" width=\"12\" height=\"12\" fill=\"" + fill + "\" stroke=\"" + ser.color + "\"/>\n";
    s += "<text x=\"" + fmt(left + pw + 58) + "\" y=\"" + fmt(y + 10) + "\">" + detail::escape(ser.name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// Own-hand bars solid, cross-hand bars hatched, one category per model/modality.
inline std::string fvaf_chart(const std::vector<eval::ModalityResult>& results) {
  BarChart c;
  c.title = "Force reconstruction per hand";
  c.y_label = "FVAF [%]";
  BarSeries l{"left", {}, {}, "#4477aa", false}, lx{"left from right output", {}, {}, "#4477aa", true};
  BarSeries r{"right", {}, {}, "#ee6677", false}, rx{"right from left output", {}, {}, "#ee6677", true};
  for (const auto& m : results) {
    c.categories.push_back(m.modality + " " + m.model);
    l.values.push_back(m.fvaf[0]);
    lx.values.push_back(m.cross[0]);
    r.values.push_back(m.fvaf[1]);
    rx.values.push_back(m.cross[1]);
  }
  c.series = {l, lx, r, rx};
  return render_bar_chart(c);
}

inline std::string sensitivity_chart(const eval::SensitivityResult& s, const std::string& title) {
  BarChart c;
  c.title = title;
  c.y_label = s.degenerate ? "FVAF drop [%]" : "change [%]";
  BarSeries b{"shuffled", {}, {}, "#228833", false};
  for (const auto& r : s.rows) {
    if (r.reference) continue;
    c.categories.push_back(r.group);
    b.values.push_back(r.percent_change);
    b.errors.push_back(r.percent_change_sd);
  }
  c.series = {b};
  if (!s.degenerate) c.reference_lines = {{0.0, "none (0%)"}, {100.0, "all (100%)"}};
  return render_bar_chart(c);
}

}  // namespace bimodec::io
