#include "kausal/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kausal {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> ticks;
};

Axis make_axis(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  Axis axis;
  axis.lo = std::floor(lo / step) * step;
  axis.hi = std::ceil(hi / step) * step;
  for (double t = axis.lo; t <= axis.hi + step / 2; t += step) axis.ticks.push_back(t);
  return axis;
}

}  // namespace

std::string render_svg(const std::vector<PlotSeries>& series, const PlotStyle& style) {
  if (series.empty()) throw std::invalid_argument("render_svg: no series");
  for (const PlotSeries& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size())
      throw std::invalid_argument("render_svg: series '" + s.label + "' has bad shape");
    if (!s.band_lo.empty() &&
        (s.band_lo.size() != s.x.size() || s.band_hi.size() != s.x.size()))
      throw std::invalid_argument("render_svg: band shape mismatch in '" + s.label + "'");
  }

  double xmin = series[0].x[0], xmax = xmin, ymin = series[0].y[0], ymax = ymin;
  for (const PlotSeries& s : series) {
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
    for (double v : s.band_lo) ymin = std::min(ymin, v);
    for (double v : s.band_hi) ymax = std::max(ymax, v);
  }
  const Axis xaxis = make_axis(xmin, xmax);
  const Axis yaxis = make_axis(ymin, ymax);

  const double ml = 72, mr = 24, mt = style.title.empty() ? 24 : 44, mb = 56;
  const double pw = style.width - ml - mr;
  const double ph = style.height - mt - mb;
  auto px = [&](double x) { return ml + (x - xaxis.lo) / (xaxis.hi - xaxis.lo) * pw; };
  auto py = [&](double y) { return mt + ph - (y - yaxis.lo) / (yaxis.hi - yaxis.lo) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(style.width)
      << "\" height=\"" << num(style.height) << "\" viewBox=\"0 0 " << num(style.width) << ' '
      << num(style.height) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!style.title.empty())
    svg << "<text x=\"" << num(style.width / 2) << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << style.title << "</text>\n";

  // grid + ticks
  svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (double t : xaxis.ticks) {
    const double x = px(t);
    svg << "<line x1=\"" << num(x) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(x) << "\" y2=\""
        << num(mt + ph) << "\" stroke=\"#e5e5e5\"/>\n";
    svg << "<text x=\"" << num(x) << "\" y=\"" << num(mt + ph + 16)
        << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
  }
  for (double t : yaxis.ticks) {
    const double y = py(t);
    svg << "<line x1=\"" << num(ml) << "\" y1=\"" << num(y) << "\" x2=\"" << num(ml + pw)
        << "\" y2=\"" << num(y) << "\" stroke=\"#e5e5e5\"/>\n";
    svg << "<text x=\"" << num(ml - 6) << "\" y=\"" << num(y + 4)
        << "\" text-anchor=\"end\">" << num(t) << "</text>\n";
  }
  svg << "<text x=\"" << num(ml + pw / 2) << "\" y=\"" << num(style.height - 12)
      << "\" text-anchor=\"middle\" font-size=\"13\">" << style.x_label << "</text>\n";
  svg << "<text transform=\"translate(18," << num(mt + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"13\">" << style.y_label
      << "</text>\n";
  svg << "</g>\n";
  svg << "<rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\"" << num(pw)
      << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";

  if (style.diagonal)
    svg << "<line x1=\"" << num(px(xaxis.lo)) << "\" y1=\"" << num(py(yaxis.lo)) << "\" x2=\""
        << num(px(xaxis.hi)) << "\" y2=\"" << num(py(yaxis.hi))
        << "\" stroke=\"#999\" stroke-dasharray=\"5,4\"/>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const PlotSeries& s = series[si];
    const std::string color =
        s.color.empty() ? kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))] : s.color;

    if (!s.band_lo.empty()) {
      svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        svg << num(px(s.x[i])) << ',' << num(py(s.band_hi[i])) << ' ';
      for (std::size_t i = s.x.size(); i-- > 0;)
        svg << num(px(s.x[i])) << ',' << num(py(s.band_lo[i])) << ' ';
      svg << "\"/>\n";
    }

    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (style.staircase && i > 0)
        svg << num(px(s.x[i])) << ',' << num(py(s.y[i - 1])) << ' ';
      svg << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
    }
    svg << "\"/>\n";
  }

  // legend
  svg << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  double ly = mt + 14;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const PlotSeries& s = series[si];
    const std::string color =
        s.color.empty() ? kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))] : s.color;
    svg << "<line x1=\"" << num(ml + pw - 150) << "\" y1=\"" << num(ly - 4) << "\" x2=\""
        << num(ml + pw - 128) << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << num(ml + pw - 122) << "\" y=\"" << num(ly) << "\">" << s.label
        << "</text>\n";
    ly += 16;
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

void write_svg(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
               const PlotStyle& style) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << render_svg(series, style);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace kausal
