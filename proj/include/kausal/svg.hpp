#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace kausal {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;  // empty = palette
  // Optional envelope around the line (ensemble spread); same x grid.
  std::vector<double> band_lo;
  std::vector<double> band_hi;
};

struct PlotStyle {
  std::string title;
  std::string x_label = "x";
  std::string y_label = "y";
  double width = 840.0;
  double height = 520.0;
  bool staircase = false;  // ROC-style step interpolation
  bool diagonal = false;   // dashed reference diagonal
};

// Standalone deterministic SVG: axes with ticks, legend, one polyline per
// series, optional shaded min/max bands.
std::string render_svg(const std::vector<PlotSeries>& series, const PlotStyle& style);

void write_svg(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
               const PlotStyle& style);

}  // namespace kausal
