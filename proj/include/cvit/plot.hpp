#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cvit/errors.hpp"

namespace cvit::plot {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct Rgb {
    int r, g, b;
};

// Fixed 5-stop colormap (dark blue, blue, green, yellow, red), linear
// interpolation between stops; t is clamped to [0, 1].
inline Rgb colormap(double t)
{
    static constexpr std::array<Rgb, 5> stops{{{33, 25, 99}, {44, 123, 182}, {94, 186, 104}, {253, 217, 62}, {215, 48, 39}}};
    if (!std::isfinite(t)) t = 0;
    t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
    const double f = t - static_cast<double>(i);
    auto lerp = [f](int a, int b) { return static_cast<int>(std::lround(a + f * (b - a))); };
    return {lerp(stops[i].r, stops[i + 1].r), lerp(stops[i].g, stops[i + 1].g), lerp(stops[i].b, stops[i + 1].b)};
}

namespace detail {

inline std::string escape(const std::string& s)
{
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

inline const char* line_color(std::size_t i)
{
    static constexpr std::array<const char*, 6> palette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    return palette[i % palette.size()];
}

}  // namespace detail

/// One polyline per series, shared axes, legend in the top-left corner.
inline std::string line_plot(const std::vector<Series>& series, const std::string& title = "")
{
    if (series.empty()) throw ConfigError("line plot needs at least one series");
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw DimensionError("series '" + s.name + "' has mismatched x/y lengths");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
        }
    }
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad, y1 += pad;

    constexpr double w = 640, h = 400, left = 60, right = 20, top = 40, bottom = 40;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
    auto py = [&](double y) { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); };

    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
       << ' ' << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty()) {
        os << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
           << detail::escape(title) << "</text>\n";
    }
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w - left - right << "\" height=\""
       << h - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << left << "\" y=\"" << h - 20 << "\" font-family=\"sans-serif\" font-size=\"11\">" << x0
       << "</text>\n";
    os << "<text x=\"" << w - right << "\" y=\"" << h - 20
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << x1 << "</text>\n";
    os << "<text x=\"" << left - 4 << "\" y=\"" << py(y0 + pad)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << y0 + pad << "</text>\n";
    os << "<text x=\"" << left - 4 << "\" y=\"" << py(y1 - pad)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << y1 - pad << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        os << "<polyline fill=\"none\" stroke=\"" << detail::line_color(k) << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            os << px(s.x[i]) << ',' << py(s.y[i]) << (i + 1 < s.x.size() ? " " : "");
        }
        os << "\"/>\n";
        os << "<text x=\"" << left + 8 << "\" y=\"" << top + 16 + 14 * k << "\" fill=\"" << detail::line_color(k)
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << detail::escape(s.name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

/// Heatmap of a rows x cols field (row-major), one rect per cell, plus a
/// colorbar with the value range.
inline std::string heatmap(const std::vector<double>& values, std::size_t rows, std::size_t cols,
                           const std::string& title = "")
{
    if (rows == 0 || cols == 0 || values.size() != rows * cols) {
        throw DimensionError("heatmap needs rows*cols values, got " + std::to_string(values.size()) + " for " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : values) {
        if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    if (!(lo <= hi)) lo = 0, hi = 1;
    const double span = hi > lo ? hi - lo : 1.0;

    constexpr double cell_max = 8;
    const double cell = std::max(1.0, std::min(cell_max, 600.0 / static_cast<double>(std::max(rows, cols))));
    const double left = 20, top = 40;
    const double w = left + cell * static_cast<double>(cols) + 80, h = top + cell * static_cast<double>(rows) + 20;

    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
       << ' ' << h << "\" shape-rendering=\"crispEdges\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty()) {
        os << "<text x=\"" << left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << detail::escape(title)
           << "</text>\n";
    }
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const auto rgb = colormap((values[r * cols + c] - lo) / span);
            os << "<rect x=\"" << left + cell * static_cast<double>(c) << "\" y=\"" << top + cell * static_cast<double>(r)
               << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << rgb.r << ',' << rgb.g << ','
               << rgb.b << ")\"/>\n";
        }
    }
    const double bx = left + cell * static_cast<double>(cols) + 12, bh = cell * static_cast<double>(rows);
    for (int i = 0; i < 32; ++i) {
        const auto rgb = colormap(1.0 - (i + 0.5) / 32.0);
        os << "<rect x=\"" << bx << "\" y=\"" << top + bh * i / 32.0 << "\" width=\"12\" height=\"" << bh / 32.0
           << "\" fill=\"rgb(" << rgb.r << ',' << rgb.g << ',' << rgb.b << ")\"/>\n";
    }
    os << "<text x=\"" << bx + 16 << "\" y=\"" << top + 10 << "\" font-family=\"sans-serif\" font-size=\"11\">" << hi
       << "</text>\n";
    os << "<text x=\"" << bx + 16 << "\" y=\"" << top + bh << "\" font-family=\"sans-serif\" font-size=\"11\">" << lo
       << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace cvit::plot
