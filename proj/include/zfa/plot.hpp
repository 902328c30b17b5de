#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "zfa/errors.hpp"
#include "zfa/io.hpp"

namespace zfa {

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string format_double_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

/// Write a single-series line plot (x = 1..N) as a self-contained SVG file.
/// An optional horizontal reference line marks a target level. Output is
/// deterministic: same series, same bytes.
inline void write_line_svg(const std::string& path, const std::vector<double>& ys,
                           const std::string& title, const std::string& y_label,
                           std::optional<double> reference = {}) {
  if (ys.empty()) throw InvalidInputError("write_line_svg: empty series");
  const double width = 640, height = 420;
  const double left = 70, right = 20, top = 40, bottom = 45;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double lo = ys[0], hi = ys[0];
  for (double y : ys) {
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  if (reference) {
    lo = std::min(lo, *reference);
    hi = std::max(hi, *reference);
  }
  if (!(hi > lo)) {
    hi += 0.5;
    lo -= 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const auto x_of = [&](std::size_t i) {
    return ys.size() == 1 ? left + plot_w / 2
                          : left + plot_w * double(i) / double(ys.size() - 1);
  };
  const auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::svg_num(width) +
         "\" height=\"" + detail::svg_num(height) + "\" viewBox=\"0 0 " +
         detail::svg_num(width) + " " + detail::svg_num(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + detail::svg_num(width / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">" + title + "</text>\n";
  svg += "<rect x=\"" + detail::svg_num(left) + "\" y=\"" + detail::svg_num(top) +
         "\" width=\"" + detail::svg_num(plot_w) + "\" height=\"" + detail::svg_num(plot_h) +
         "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double v : {lo + pad, hi - pad}) {
    const double y = y_of(v);
    svg += "<line x1=\"" + detail::svg_num(left - 5) + "\" y1=\"" + detail::svg_num(y) +
           "\" x2=\"" + detail::svg_num(left) + "\" y2=\"" + detail::svg_num(y) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::svg_num(left - 8) + "\" y=\"" + detail::svg_num(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::format_double_short(v) + "</text>\n";
  }
  for (std::size_t i : {std::size_t(0), ys.size() - 1}) {
    const double x = x_of(i);
    svg += "<line x1=\"" + detail::svg_num(x) + "\" y1=\"" +
           detail::svg_num(top + plot_h) + "\" x2=\"" + detail::svg_num(x) + "\" y2=\"" +
           detail::svg_num(top + plot_h + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::svg_num(x) + "\" y=\"" +
           detail::svg_num(top + plot_h + 18) + "\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"11\">" + std::to_string(i + 1) +
           "</text>\n";
  }
  svg += "<text x=\"" + detail::svg_num(left + plot_w / 2) + "\" y=\"" +
         detail::svg_num(height - 10) + "\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"12\">iteration</text>\n";
  svg += "<text x=\"16\" y=\"" + detail::svg_num(top + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 16 " + detail::svg_num(top + plot_h / 2) + ")\">" +
         y_label + "</text>\n";

  if (reference) {
    const double y = y_of(*reference);
    svg += "<line x1=\"" + detail::svg_num(left) + "\" y1=\"" + detail::svg_num(y) +
           "\" x2=\"" + detail::svg_num(left + plot_w) + "\" y2=\"" + detail::svg_num(y) +
           "\" stroke=\"#888888\" stroke-dasharray=\"6 4\"/>\n";
  }

  svg += "<polyline fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (i) svg += " ";
    svg += detail::svg_num(x_of(i)) + "," + detail::svg_num(y_of(ys[i]));
  }
  svg += "\"/>\n";
  for (std::size_t i = 0; i < ys.size(); ++i)
    svg += "<circle cx=\"" + detail::svg_num(x_of(i)) + "\" cy=\"" +
           detail::svg_num(y_of(ys[i])) + "\" r=\"2.5\" fill=\"#1f5fbf\"/>\n";
  svg += "</svg>\n";
  detail::write_file(path, svg);
}

}  // namespace zfa
