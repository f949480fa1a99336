#pragma once

#include <string>
#include <vector>

namespace flowprobe::harness {

// Minimal polyline line chart, written as standalone SVG with no external
// dependencies and no timestamps.
struct Series {
    std::string label;
    std::string color;                            // css color
    std::vector<std::pair<double, double>> points;
    bool rescale_to_left_axis = false;            // normalize to its own max, for overlays
};

struct ChartSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    int width = 640;
    int height = 420;
};

void write_line_chart(const std::string& path, const ChartSpec& spec,
                      const std::vector<Series>& series);

}  // namespace flowprobe::harness
