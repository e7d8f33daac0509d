#include "milr/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace milr {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

bool try_parse(const std::string& text, double& out) {
  try {
    out = parse_double(text);
    return std::isfinite(out);
  } catch (const ValidationError&) {
    return false;
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_line_chart(const CsvTable& table, const std::string& x_column,
                           const std::vector<std::string>& y_columns, const PlotOptions& options) {
  if (y_columns.empty()) throw ValidationError("plot needs at least one y column");
  const std::size_t xi = table.column(x_column);
  std::vector<Series> series;
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& name : y_columns) {
    const std::size_t yi = table.column(name);
    Series s{name, {}};
    for (const auto& row : table.rows) {
      double x = 0.0, y = 0.0;
      if (!try_parse(row[xi], x) || !try_parse(row[yi], y)) continue;
      if (options.log_y) {
        if (y <= 0.0) continue;
        y = std::log10(y);
      }
      s.points.emplace_back(x, y);
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
    series.push_back(std::move(s));
  }
  if (!std::isfinite(x_lo)) throw ValidationError("plot: no numeric points in the selected columns");
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) y_hi = y_lo + 1.0;

  const double left = 70, right = 160, top = 40, bottom = 50;
  const double plot_w = options.width - left - right;
  const double plot_h = options.height - top - bottom;
  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double y) { return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(options.width) + "\" height=\"" +
         std::to_string(options.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!options.title.empty()) {
    svg += "<text x=\"" + fmt(left + plot_w / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
           escape(options.title) + "</text>\n";
  }
  svg += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(plot_w) + "\" height=\"" +
         fmt(plot_h) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double fx = x_lo + (x_hi - x_lo) * k / 5.0;
    const double fy = y_lo + (y_hi - y_lo) * k / 5.0;
    svg += "<line x1=\"" + fmt(px(fx)) + "\" y1=\"" + fmt(top + plot_h) + "\" x2=\"" + fmt(px(fx)) + "\" y2=\"" +
           fmt(top + plot_h + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(px(fx)) + "\" y=\"" + fmt(top + plot_h + 18) + "\" text-anchor=\"middle\">" + fmt(fx) +
           "</text>\n";
    svg += "<line x1=\"" + fmt(left - 5) + "\" y1=\"" + fmt(py(fy)) + "\" x2=\"" + fmt(left) + "\" y2=\"" +
           fmt(py(fy)) + "\" stroke=\"black\"/>\n";
    const std::string label = options.log_y ? "1e" + fmt(fy) : fmt(fy);
    svg += "<text x=\"" + fmt(left - 8) + "\" y=\"" + fmt(py(fy) + 4) + "\" text-anchor=\"end\">" + label +
           "</text>\n";
  }
  svg += "<text x=\"" + fmt(left + plot_w / 2) + "\" y=\"" + fmt(options.height - 10.0) +
         "\" text-anchor=\"middle\">" + escape(x_column) + "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* colour = kPalette[s % std::size(kPalette)];
    std::string path;
    for (const auto& [x, y] : series[s].points) path += (path.empty() ? "" : " ") + fmt(px(x)) + "," + fmt(py(y));
    if (!path.empty()) {
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.5\" points=\"" + path +
             "\"/>\n";
    }
    const double ly = top + 14 + 18.0 * static_cast<double>(s);
    svg += "<line x1=\"" + fmt(left + plot_w + 12) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(left + plot_w + 36) +
           "\" y2=\"" + fmt(ly) + "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt(left + plot_w + 42) + "\" y=\"" + fmt(ly + 4) + "\">" + escape(series[s].name) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace milr
