#pragma once

#include <string>
#include <vector>

#include "milr/io.hpp"

namespace milr {

struct PlotOptions {
  std::string title;
  bool log_y = false;
  int width = 720;
  int height = 440;
};

/// Standalone SVG line chart of the `y_columns` of `table` against `x_column`,
/// with axes, tick labels and a legend. Non-numeric cells are skipped; with
/// log_y, non-positive values are skipped too.
std::string svg_line_chart(const CsvTable& table, const std::string& x_column,
                           const std::vector<std::string>& y_columns, const PlotOptions& options);

}  // namespace milr
