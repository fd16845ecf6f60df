#include "asyncsgd/cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "asyncsgd/trace_io.hpp"

namespace asyncsgd::cli {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

std::string escape(const std::string& s) {
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

// Fixed 2-decimal coordinates keep the files small and byte-stable.
std::string coord(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
    return os.str();
}

std::string tick_label(double v, bool log_axis) {
    if (log_axis) return "1e" + std::to_string(static_cast<int>(std::lround(v)));
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& opts) {
    const double left = 70;
    const double right = 170;
    const double top = 40;
    const double bottom = 50;
    const double plot_w = opts.width - left - right;
    const double plot_h = opts.height - top - bottom;

    auto ty = [&](double y) { return opts.log_y ? std::log10(y) : y; };
    double xmin = std::numeric_limits<double>::infinity();
    double xmax = -xmin;
    double ymin = xmin;
    double ymax = -xmin;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y) || (opts.log_y && y <= 0.0)) continue;
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, ty(y));
            ymax = std::max(ymax, ty(y));
        }
    }
    if (!std::isfinite(xmin)) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double y) { return top + plot_h - (ty(y) - ymin) / (ymax - ymin) * plot_h; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\"" << opts.height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << coord(left + plot_w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << escape(opts.title) << "</text>\n";
    os << "<rect x=\"" << coord(left) << "\" y=\"" << coord(top) << "\" width=\"" << coord(plot_w) << "\" height=\""
       << coord(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";

    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        const double sx = left + plot_w * i / 4.0;
        const double sy = top + plot_h - plot_h * i / 4.0;
        os << "<text x=\"" << coord(sx) << "\" y=\"" << coord(top + plot_h + 16) << "\" text-anchor=\"middle\">"
           << tick_label(fx, false) << "</text>\n";
        os << "<text x=\"" << coord(left - 6) << "\" y=\"" << coord(sy + 4) << "\" text-anchor=\"end\">"
           << tick_label(fy, opts.log_y) << "</text>\n";
    }
    os << "<text x=\"" << coord(left + plot_w / 2) << "\" y=\"" << coord(opts.height - 12.0)
       << "\" text-anchor=\"middle\">" << escape(opts.x_label) << "</text>\n";
    os << "<text x=\"16\" y=\"" << coord(top + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << coord(top + plot_h / 2) << ")\">" << escape(opts.y_label) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kPalette[k % std::size(kPalette)];
        if (s.markers) {
            for (const auto& [x, y] : s.points) {
                if (!std::isfinite(x) || !std::isfinite(y) || (opts.log_y && y <= 0.0)) continue;
                os << "<circle cx=\"" << coord(px(x)) << "\" cy=\"" << coord(py(y)) << "\" r=\"3.5\" fill=\"" << color
                   << "\"/>\n";
            }
        } else {
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            bool first = true;
            for (const auto& [x, y] : s.points) {
                if (!std::isfinite(x) || !std::isfinite(y) || (opts.log_y && y <= 0.0)) continue;
                os << (first ? "" : " ") << coord(px(x)) << ',' << coord(py(y));
                first = false;
            }
            os << "\"/>\n";
        }
        const double ly = top + 14 + 18.0 * static_cast<double>(k);
        os << "<rect x=\"" << coord(left + plot_w + 12) << "\" y=\"" << coord(ly - 9) << "\" width=\"12\" height=\"4\" fill=\""
           << color << "\"/>\n";
        os << "<text x=\"" << coord(left + plot_w + 30) << "\" y=\"" << coord(ly - 3) << "\">" << escape(s.label)
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace asyncsgd::cli
