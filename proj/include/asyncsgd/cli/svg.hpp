#pragma once

// Minimal self-contained SVG line charts for report files.

#include <string>
#include <utility>
#include <vector>

namespace asyncsgd::cli {

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
    bool markers = false;  // draw points instead of a polyline
};

struct ChartOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;  // non-positive values are dropped
    int width = 720;
    int height = 440;
};

std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& opts);

}  // namespace asyncsgd::cli
