// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include "lkda/cli/svg.hpp"

#include <cstdio>
#include <sstream>

namespace lkda::cli {

namespace {

const char* kColors[] = {"#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6c4f9e", "#444444"};

std::string escape(const std::string& s) {
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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_line_plot(const PlotSpec& spec, const std::vector<Series>& series) {
  const double left = 64, right = 150, top = 40, bottom = 56;
  const double pw = spec.width - left - right, ph = spec.height - top - bottom;
  const double xr = spec.x_max > spec.x_min ? spec.x_max - spec.x_min : 1.0;
  const double yr = spec.y_max > spec.y_min ? spec.y_max - spec.y_min : 1.0;
  auto px = [&](double x) { return left + (x - spec.x_min) / xr * pw; };
  auto py = [&](double y) { return top + ph - (y - spec.y_min) / yr * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
    << "\" viewBox=\"0 0 " << spec.width << ' ' << spec.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << spec.width << "\" height=\"" << spec.height << "\" fill=\"white\"/>\n"
    << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(spec.title) << "</text>\n";

  o << "<g stroke=\"#222\" stroke-width=\"1\">\n"
    << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(left + pw) << "\" y2=\""
    << num(top + ph) << "\"/>\n"
    << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
    << num(top + ph) << "\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = spec.x_min + xr * i / 5.0, fy = spec.y_min + yr * i / 5.0;
    o << "<line x1=\"" << num(px(fx)) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(px(fx))
      << "\" y2=\"" << num(top + ph + 5) << "\"/>\n"
      << "<line x1=\"" << num(left - 5) << "\" y1=\"" << num(py(fy)) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(py(fy)) << "\"/>\n";
  }
  o << "</g>\n<g fill=\"#222\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = spec.x_min + xr * i / 5.0, fy = spec.y_min + yr * i / 5.0;
    o << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">"
      << num(fx) << "</text>\n"
      << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(fy) + 4) << "\" text-anchor=\"end\">" << num(fy)
      << "</text>\n";
  }
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(spec.height - 12.0)
    << "\" text-anchor=\"middle\">" << escape(spec.x_label) << "</text>\n"
    << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num(top + ph / 2) << ")\">" << escape(spec.y_label) << "</text>\n</g>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % (sizeof kColors / sizeof *kColors)];
    o << "<path class=\"series\" data-label=\"" << escape(series[s].label) << "\" fill=\"none\" stroke=\""
      << color << "\" stroke-width=\"2\" d=\"";
    for (std::size_t i = 0; i < series[s].points.size(); ++i) {
      const auto [x, y] = series[s].points[i];
      o << (i ? " L " : "M ") << num(px(x)) << ' ' << num(py(y));
    }
    o << "\"/>\n";
    const double ly = top + 12 + 20.0 * static_cast<double>(s);
    o << "<g class=\"legend\"><line x1=\"" << num(left + pw + 16) << "\" y1=\"" << num(ly) << "\" x2=\""
      << num(left + pw + 40) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/><text x=\"" << num(left + pw + 46) << "\" y=\"" << num(ly + 4) << "\">"
      << escape(series[s].label) << "</text></g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace lkda::cli
