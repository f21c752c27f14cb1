#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "urpca/errors.hpp"

namespace urpca {

struct PlotSeries {
  std::string label;
  std::string color;
  std::vector<double> y;
};

/// Writes a static line chart (x = sample index) as a standalone SVG file.
inline void write_line_plot(const std::string& path, const std::string& title,
                            const std::string& y_label, const std::vector<PlotSeries>& series) {
  if (series.empty() || series.front().y.empty())
    throw std::invalid_argument("plot: nothing to draw");
  const double width = 960, height = 480;
  const double ml = 70, mr = 20, mt = 40, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;

  std::size_t n = 0;
  double y_min = std::numeric_limits<double>::infinity(), y_max = -y_min;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (double v : s.y)
      if (std::isfinite(v)) {
        y_min = std::min(y_min, v);
        y_max = std::max(y_max, v);
      }
  }
  if (!(y_max > y_min)) {
    y_min -= 1.0;
    y_max += 1.0;
  }
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;

  auto px = [&](std::size_t i) { return ml + pw * double(i) / double(n > 1 ? n - 1 : 1); };
  auto py = [&](double v) { return mt + ph * (1.0 - (v - y_min) / (y_max - y_min)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";

  const int n_ticks = 6;
  svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">\n";
  for (int t = 0; t <= n_ticks; ++t) {
    const double v = y_min + (y_max - y_min) * t / n_ticks;
    const double y = py(v);
    svg << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << width - mr << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
        << int(std::lround(v)) << "</text>\n";
  }
  for (int t = 0; t <= n_ticks; ++t) {
    const std::size_t i = std::size_t(double(n - 1) * t / n_ticks);
    svg << "<text x=\"" << px(i) << "\" y=\"" << height - mb + 18
        << "\" text-anchor=\"middle\">" << i << "</text>\n";
  }
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">bin</text>\n";
  svg << "<text x=\"16\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << mt + ph / 2 << ")\">" << y_label << "</text>\n";
  svg << "</g>\n";
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#888\"/>\n";

  for (const auto& s : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      double v = s.y[i];
      if (!std::isfinite(v)) v = y_min;
      svg << px(i) << "," << py(std::clamp(v, y_min, y_max)) << " ";
    }
    svg << "\"/>\n";
  }

  double lx = ml + 12, ly = mt + 16;
  svg << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (const auto& s : series) {
    svg << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 24 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << lx + 30 << "\" y=\"" << ly << "\">" << s.label << "</text>\n";
    ly += 18;
  }
  svg << "</g>\n</svg>\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open plot file: " + path);
  f << svg.str();
  if (!f) throw IoError("plot write failed: " + path);
}

}  // namespace urpca
