#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qrmlab::svg {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool clamp_y01 = false;      // probability axis: y range pinned to [0, 1]
  bool identity_line = false;  // dashed y = x reference
};

// Standalone SVG: axes, ticks, one polyline per series, optional legend.
// No fonts or external references beyond generic sans-serif.
void write_plot(const std::string& path, std::span<const Series> series,
                const PlotOptions& options);

}  // namespace qrmlab::svg
