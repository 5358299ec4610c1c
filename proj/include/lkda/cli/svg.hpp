// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

namespace lkda::cli {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
  int width = 640;
  int height = 420;
};

/// Standalone SVG line chart: axes with ticks, one <path> per series, legend.
std::string render_line_plot(const PlotSpec& spec, const std::vector<Series>& series);

}  // namespace lkda::cli
