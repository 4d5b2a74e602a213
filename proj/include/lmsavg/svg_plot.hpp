#ifndef LMSAVG_SVG_PLOT_HPP
#define LMSAVG_SVG_PLOT_HPP

// Self-contained SVG 1.1 log-log line plots.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lmsavg/io.hpp"

namespace lmsavg {

struct PlotSeries {
    std::string key;
    std::vector<std::pair<double, double>> points; // (n, value); non-positive values are dropped
};

struct PlotOptions {
    std::string title;
    std::string x_label = "n";
    std::string y_label = "excess risk";
    int width = 720;
    int height = 520;
};

namespace detail {

inline std::string xml_escape(const std::string &s) {
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

inline const char *palette(std::size_t i) {
    static const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

} // namespace detail

inline std::string render_loglog_svg(const std::vector<PlotSeries> &series, const PlotOptions &opt = {}) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto &s : series)
        for (auto [x, y] : s.points) {
            if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y)) continue;
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    const bool empty = !(xmin <= xmax);
    if (empty) {
        xmin = 1.0;
        xmax = 10.0;
        ymin = 0.1;
        ymax = 1.0;
    }
    // Whole decades around the data.
    double lx0 = std::floor(std::log10(xmin)), lx1 = std::ceil(std::log10(xmax));
    double ly0 = std::floor(std::log10(ymin)), ly1 = std::ceil(std::log10(ymax));
    if (lx1 <= lx0) lx1 = lx0 + 1;
    if (ly1 <= ly0) ly1 = ly0 + 1;

    const double left = 80, right = 200, top = 40, bottom = 60;
    const double pw = opt.width - left - right, ph = opt.height - top - bottom;
    auto px = [&](double x) { return left + (std::log10(x) - lx0) / (lx1 - lx0) * pw; };
    auto py = [&](double y) { return top + (ly1 - std::log10(y)) / (ly1 - ly0) * ph; };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << opt.width << "\" height=\""
       << opt.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opt.title.empty())
        os << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
           << detail::xml_escape(opt.title) << "</text>\n";

    // Axes, grid and decade labels.
    os << "<g id=\"axes\" stroke=\"black\" fill=\"none\">\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph << "\"/>\n";
    os << "</g>\n<g id=\"ticks\">\n";
    for (double e = lx0; e <= lx1; e += 1) {
        const double x = left + (e - lx0) / (lx1 - lx0) * pw;
        os << "<line x1=\"" << x << "\" y1=\"" << top << "\" x2=\"" << x << "\" y2=\"" << top + ph
           << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << x << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">1e" << e << "</text>\n";
    }
    for (double e = ly0; e <= ly1; e += 1) {
        const double y = top + (ly1 - e) / (ly1 - ly0) * ph;
        os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + pw << "\" y2=\"" << y
           << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << opt.height - 16 << "\" text-anchor=\"middle\">"
       << detail::xml_escape(opt.x_label) << "</text>\n";
    os << "<text transform=\"translate(20," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << detail::xml_escape(opt.y_label) << "</text>\n";
    os << "</g>\n";

    // Reference slopes through the upper-left corner of the plot area.
    os << "<g id=\"reference-slopes\" stroke=\"#555555\" stroke-dasharray=\"6,4\" fill=\"none\">\n";
    for (int slope : {-1, -2}) {
        const double x0 = std::pow(10.0, lx0), y0 = std::pow(10.0, ly1);
        double x1 = std::pow(10.0, lx1);
        double y1 = y0 * std::pow(x1 / x0, slope);
        if (y1 < std::pow(10.0, ly0)) {
            y1 = std::pow(10.0, ly0);
            x1 = x0 * std::pow(y1 / y0, 1.0 / slope);
        }
        os << "<line x1=\"" << px(x0) << "\" y1=\"" << py(y0) << "\" x2=\"" << px(x1) << "\" y2=\"" << py(y1)
           << "\"/>\n";
        os << "<text x=\"" << px(x1) - 4 << "\" y=\"" << py(y1) - 6 << "\" text-anchor=\"end\" stroke=\"none\" "
           << "fill=\"#555555\">slope " << slope << "</text>\n";
    }
    os << "</g>\n";

    os << "<g id=\"series\" fill=\"none\" stroke-width=\"1.5\">\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        os << "<polyline stroke=\"" << detail::palette(i) << "\" data-key=\"" << detail::xml_escape(series[i].key)
           << "\" points=\"";
        bool first = true;
        for (auto [x, y] : series[i].points) {
            if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y)) continue;
            os << (first ? "" : " ") << detail::fmt(px(x)) << "," << detail::fmt(py(y));
            first = false;
        }
        os << "\"/>\n";
    }
    os << "</g>\n";

    os << "<g id=\"legend\">\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double y = top + 10 + 18 * static_cast<double>(i);
        const double x = left + pw + 12;
        os << "<line x1=\"" << x << "\" y1=\"" << y << "\" x2=\"" << x + 20 << "\" y2=\"" << y << "\" stroke=\""
           << detail::palette(i) << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << x + 26 << "\" y=\"" << y + 4 << "\">" << detail::xml_escape(series[i].key)
           << "</text>\n";
    }
    os << "</g>\n</svg>\n";
    return os.str();
}

} // namespace lmsavg

#endif // LMSAVG_SVG_PLOT_HPP
