#include "capeskit/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "capeskit/error.hpp"
#include "capeskit/io.hpp"

namespace capeskit::svg {

namespace {

struct Band {
  const char* color;
  const char* label;
};

// Dry browns through white to wet blues.
constexpr std::array<Band, 7> kBands = {{
    {"#8c510a", "< -100%"},
    {"#d8b365", "-100% to -50%"},
    {"#f6e8c3", "-50% to -20%"},
    {"#f5f5f5", "-20% to 20%"},
    {"#c7eae5", "20% to 50%"},
    {"#5ab4ac", "50% to 100%"},
    {"#01665e", "> 100%"},
}};

std::size_t band_of(double a) {
  if (a < -100.0) return 0;
  if (a < -50.0) return 1;
  if (a <= -20.0) return 2;
  if (a < 20.0) return 3;
  if (a <= 50.0) return 4;
  if (a <= 100.0) return 5;
  return 6;
}

std::string escape(std::string_view s) {
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

std::string num(double v) { return format_fixed(v, 2); }

std::string text(double x, double y, std::string_view s, std::string_view extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\"" + (extra.empty() ? "" : " " + std::string(extra)) + ">" +
         escape(s) + "</text>\n";
}

}  // namespace

std::string_view anomaly_color(double a) { return kBands[band_of(a)].color; }

std::string render_heatmap(const GridField& field, std::string_view title) {
  if (field.units() != Units::percent) throw UnitError("heatmap expects an anomaly-percent field");
  const GridSpec& s = field.spec();
  const double cell = std::clamp(512.0 / std::max(s.nlat, s.nlon), 2.0, 24.0);
  const double map_w = cell * s.nlon, map_h = cell * s.nlat;
  const double left = 20.0, top = 40.0, legend_w = 150.0;
  const double width = left + map_w + 20.0 + legend_w, height = std::max(top + map_h + 20.0, top + 7 * 22.0 + 40.0);

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
                    num(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out += text(left, 24.0, title, "font-size=\"16\"");
  out += "<g shape-rendering=\"crispEdges\">\n";
  const bool north_up = s.dlat > 0.0;
  for (int i = 0; i < s.nlat; ++i) {
    const int row = north_up ? s.nlat - 1 - i : i;
    for (int j = 0; j < s.nlon; ++j)
      out += "<rect x=\"" + num(left + j * cell) + "\" y=\"" + num(top + row * cell) + "\" width=\"" + num(cell) +
             "\" height=\"" + num(cell) + "\" fill=\"" + std::string(anomaly_color(field.at(i, j))) + "\"/>\n";
  }
  out += "</g>\n";
  out += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(map_w) + "\" height=\"" + num(map_h) +
         "\" fill=\"none\" stroke=\"#333333\"/>\n";

  const double lx = left + map_w + 20.0;
  out += text(lx, top + 10.0, "Anomaly (%)", "font-weight=\"bold\"");
  for (std::size_t b = kBands.size(); b-- > 0;) {
    const double y = top + 20.0 + static_cast<double>(kBands.size() - 1 - b) * 22.0;
    out += "<rect x=\"" + num(lx) + "\" y=\"" + num(y) + "\" width=\"16\" height=\"16\" fill=\"" + kBands[b].color +
           "\" stroke=\"#333333\"/>\n";
    out += text(lx + 22.0, y + 12.0, kBands[b].label);
  }
  out += "</svg>\n";
  return out;
}

std::string render_line_chart(const std::vector<Series>& series, std::string_view title, std::string_view x_label,
                              std::string_view y_label) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DomainError("series '" + s.label + "' has mismatched x and y lengths");
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0) || !std::isfinite(y0)) throw DomainError("line chart needs at least one finite point");
  if (x1 == x0) x0 -= 1.0, x1 += 1.0;
  if (y1 == y0) y0 -= 1.0, y1 += 1.0;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double width = 640.0, height = 400.0, left = 70.0, right = 20.0, top = 40.0, bottom = 60.0;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  static constexpr std::array<const char*, 6> kColors = {"#1b9e77", "#d95f02", "#7570b3",
                                                         "#e7298a", "#66a61e", "#e6ab02"};

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
                    num(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out += text(left, 24.0, title, "font-size=\"16\"");
  out += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"#333333\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = x0 + (x1 - x0) * t / 4.0, fy = y0 + (y1 - y0) * t / 4.0;
    out += text(px(fx), top + ph + 18.0, format_fixed(fx, 1), "text-anchor=\"middle\"");
    out += text(left - 6.0, py(fy) + 4.0, format_fixed(fy, 2), "text-anchor=\"end\"");
    out += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(fy)) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
           num(py(fy)) + "\" stroke=\"#e0e0e0\"/>\n";
  }
  out += text(left + pw / 2.0, height - 16.0, x_label, "text-anchor=\"middle\"");
  out += text(16.0, top + ph / 2.0, y_label,
              "text-anchor=\"middle\" transform=\"rotate(-90 16.00 " + num(top + ph / 2.0) + ")\"");

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % kColors.size()];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) pts += (i ? " " : "") + num(px(s.x[i])) + "," + num(py(s.y[i]));
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts +
           "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      out += "<circle cx=\"" + num(px(s.x[i])) + "\" cy=\"" + num(py(s.y[i])) + "\" r=\"3\" fill=\"" + color +
             "\"/>\n";
    out += text(left + pw - 120.0, top + 16.0 + 16.0 * static_cast<double>(k), s.label,
                "fill=\"" + std::string(color) + "\"");
  }
  out += "</svg>\n";
  return out;
}

}  // namespace capeskit::svg
