#pragma once

#include <string>
#include <vector>

namespace madg {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  /// When set, x values are indices into these tick labels (categorical axis).
  std::vector<std::string> x_categories;
  std::vector<PlotSeries> series;
};

/// Self-contained SVG line chart with axes, ticks and a legend.
std::string render_line_chart(const PlotSpec& spec);

std::string xml_escape(const std::string& text);

}  // namespace madg
