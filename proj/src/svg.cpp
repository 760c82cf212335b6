#include "qrmlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace qrmlab::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 16.0;
constexpr double kTop = 32.0;
constexpr double kBottom = 48.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Range {
  double lo;
  double hi;

  double clamp_to_plot(double v) const {
    return std::min(std::max(v, lo), hi);
  }
};

Range padded(double lo, double hi) {
  if (!(lo < hi)) {
    const double w = std::max(std::abs(lo), 1.0);
    return {lo - 0.5 * w, hi + 0.5 * w};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

void write_plot(const std::string& path, std::span<const Series> series,
                const PlotOptions& options) {
  if (series.empty()) {
    throw std::invalid_argument("write_plot: no series");
  }
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  bool first = true;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (first) {
        x_lo = x_hi = x;
        y_lo = y_hi = y;
        first = false;
      } else {
        x_lo = std::min(x_lo, x);
        x_hi = std::max(x_hi, x);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
      }
    }
  }
  if (first) {
    throw std::invalid_argument("write_plot: series have no points");
  }
  Range xr = padded(x_lo, x_hi);
  Range yr = options.clamp_y01 ? Range{0.0, 1.0} : padded(y_lo, y_hi);

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
  auto sy = [&](double y) {
    return kTop + plot_h - (y - yr.lo) / (yr.hi - yr.lo) * plot_h;
  };

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("write_plot: cannot open '" + path + "'");
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
      << kHeight << "\">\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";

  // Axes.
  out << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(kTop + plot_h)
      << "\" x2=\"" << px(kLeft + plot_w) << "\" y2=\"" << px(kTop + plot_h)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(kTop) << "\" x2=\""
      << px(kLeft) << "\" y2=\"" << px(kTop + plot_h) << "\" stroke=\"black\"/>\n";

  // Ticks and labels.
  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double f = static_cast<double>(i) / kTicks;
    const double xv = xr.lo + f * (xr.hi - xr.lo);
    const double yv = yr.lo + f * (yr.hi - yr.lo);
    const double xp = kLeft + f * plot_w;
    const double yp = kTop + plot_h - f * plot_h;
    out << "<line x1=\"" << px(xp) << "\" y1=\"" << px(kTop + plot_h)
        << "\" x2=\"" << px(xp) << "\" y2=\"" << px(kTop + plot_h + 5)
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px(xp) << "\" y=\"" << px(kTop + plot_h + 18)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", xv);
    out << buf << "</text>\n";
    out << "<line x1=\"" << px(kLeft - 5) << "\" y1=\"" << px(yp) << "\" x2=\""
        << px(kLeft) << "\" y2=\"" << px(yp) << "\" stroke=\"black\"/>\n";
    std::snprintf(buf, sizeof(buf), "%.4g", yv);
    out << "<text x=\"" << px(kLeft - 8) << "\" y=\"" << px(yp + 4)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">"
        << buf << "</text>\n";
  }

  if (!options.title.empty()) {
    out << "<text x=\"" << px(kLeft + plot_w / 2) << "\" y=\"" << px(kTop - 10)
        << "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">"
        << options.title << "</text>\n";
  }
  if (!options.x_label.empty()) {
    out << "<text x=\"" << px(kLeft + plot_w / 2) << "\" y=\""
        << px(kHeight - 10)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
        << options.x_label << "</text>\n";
  }
  if (!options.y_label.empty()) {
    out << "<text x=\"14\" y=\"" << px(kTop + plot_h / 2)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\""
        << " transform=\"rotate(-90 14 " << px(kTop + plot_h / 2) << ")\">"
        << options.y_label << "</text>\n";
  }

  if (options.identity_line) {
    const double lo = std::max(xr.lo, yr.lo);
    const double hi = std::min(xr.hi, yr.hi);
    if (lo < hi) {
      out << "<line x1=\"" << px(sx(lo)) << "\" y1=\"" << px(sy(lo))
          << "\" x2=\"" << px(sx(hi)) << "\" y2=\"" << px(sy(hi))
          << "\" stroke=\"#999999\" stroke-dasharray=\"5,4\"/>\n";
    }
  }

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[k].points) {
      out << px(sx(xr.clamp_to_plot(x))) << ',' << px(sy(yr.clamp_to_plot(y)))
          << ' ';
    }
    out << "\"/>\n";
    if (!series[k].name.empty()) {
      const double ly = kTop + 14.0 + 16.0 * static_cast<double>(k);
      out << "<rect x=\"" << px(kLeft + plot_w - 130) << "\" y=\"" << px(ly - 9)
          << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
      out << "<text x=\"" << px(kLeft + plot_w - 115) << "\" y=\"" << px(ly)
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[k].name
          << "</text>\n";
    }
  }
  out << "</svg>\n";
  if (!out) {
    throw std::runtime_error("write_plot: write failed for '" + path + "'");
  }
}

}  // namespace qrmlab::svg
