#include "flowprobe/harness/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "flowprobe/common/error.hpp"

namespace flowprobe::harness {

namespace {

std::string escape_xml(const std::string& s) {
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

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

}  // namespace

void write_line_chart(const std::string& path, const ChartSpec& spec,
                      const std::vector<Series>& series) {
    const double ml = 60, mr = 20, mt = 36, mb = 46;  // margins
    const double pw = spec.width - ml - mr;
    const double ph = spec.height - mt - mb;

    double xmin = std::numeric_limits<double>::max(), xmax = std::numeric_limits<double>::lowest();
    double ymin = std::numeric_limits<double>::max(), ymax = std::numeric_limits<double>::lowest();
    for (const Series& s : series) {
        double smax = 0.0;
        if (s.rescale_to_left_axis)
            for (const auto& [x, y] : s.points) smax = std::max(smax, std::abs(y));
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            if (!s.rescale_to_left_axis) {
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    }
    if (xmin > xmax) { xmin = 0; xmax = 1; }
    if (ymin > ymax) { ymin = 0; ymax = 1; }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + pw * (x - xmin) / (xmax - xmin); };
    auto py = [&](double y) { return mt + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write chart: " + path);
    f << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\""
      << spec.height << "\" viewBox=\"0 0 " << spec.width << " " << spec.height << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<text x=\"" << spec.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << escape_xml(spec.title) << "</text>\n";

    // axes
    f << "<line x1=\"" << num(ml) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(ml) << "\" y2=\""
      << num(mt + ph) << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << num(ml) << "\" y1=\"" << num(mt + ph) << "\" x2=\"" << num(ml + pw)
      << "\" y2=\"" << num(mt + ph) << "\" stroke=\"black\"/>\n";

    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        f << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(mt + ph + 16)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
          << tick_label(xv) << "</text>\n";
        f << "<text x=\"" << num(ml - 6) << "\" y=\"" << num(py(yv) + 3)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
          << tick_label(yv) << "</text>\n";
        f << "<line x1=\"" << num(ml) << "\" y1=\"" << num(py(yv)) << "\" x2=\"" << num(ml + pw)
          << "\" y2=\"" << num(py(yv)) << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    }

    f << "<text x=\"" << spec.width / 2 << "\" y=\"" << spec.height - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << escape_xml(spec.x_label) << "</text>\n";
    f << "<text x=\"14\" y=\"" << num(mt + ph / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 14 "
      << num(mt + ph / 2) << ")\">" << escape_xml(spec.y_label) << "</text>\n";

    double legend_y = mt + 8;
    for (const Series& s : series) {
        if (s.points.empty()) continue;
        double smax = 1.0;
        if (s.rescale_to_left_axis) {
            smax = 0.0;
            for (const auto& [x, y] : s.points) smax = std::max(smax, std::abs(y));
            if (smax == 0.0) smax = 1.0;
        }
        auto mapy = [&](double y) {
            return s.rescale_to_left_axis ? py(ymin + (ymax - ymin) * (y / smax)) : py(y);
        };
        f << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
          << (s.rescale_to_left_axis ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
        for (const auto& [x, y] : s.points) f << num(px(x)) << "," << num(mapy(y)) << " ";
        f << "\"/>\n";
        for (const auto& [x, y] : s.points)
            f << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(mapy(y))
              << "\" r=\"2\" fill=\"" << s.color << "\"/>\n";

        f << "<rect x=\"" << num(ml + pw - 170) << "\" y=\"" << num(legend_y - 8)
          << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>\n";
        f << "<text x=\"" << num(ml + pw - 156) << "\" y=\"" << num(legend_y + 1)
          << "\" font-family=\"sans-serif\" font-size=\"10\">" << escape_xml(s.label)
          << "</text>\n";
        legend_y += 16;
    }
    f << "</svg>\n";
}

}  // namespace flowprobe::harness
