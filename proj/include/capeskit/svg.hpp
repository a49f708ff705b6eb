#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "capeskit/grid.hpp"

namespace capeskit::svg {

/// Fixed diverging ramp over anomaly percent, one color per category band:
/// < -100, [-100, -50), [-50, -20], (-20, 20), [20, 50], (50, 100], > 100.
std::string_view anomaly_color(double a);

/// Cell heatmap of an anomaly-percent field with a band legend. Rows are drawn
/// with increasing latitude upward. Output is a pure function of the input.
std::string render_heatmap(const GridField& field, std::string_view title);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart with linear axes fitted to the data.
std::string render_line_chart(const std::vector<Series>& series, std::string_view title, std::string_view x_label,
                              std::string_view y_label);

}  // namespace capeskit::svg
