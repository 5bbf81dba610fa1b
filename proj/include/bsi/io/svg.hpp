#pragma once

// Minimal standalone SVG charts: grouped boxplots and a multi-series line chart.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bsi/io/csv.hpp"
#include "bsi/metrics.hpp"

namespace bsi::io {

struct NamedBox {
    std::string label;
    BoxSummary box;
};

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

inline std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

struct Frame {
    double width = 480, height = 320, left = 60, right = 20, top = 40, bottom = 50;
    double ymin = 0, ymax = 1;

    [[nodiscard]] double py(double v) const {
        const double h = height - top - bottom;
        return top + h * (1.0 - (v - ymin) / (ymax - ymin));
    }
};

inline void y_range(double lo, double hi, Frame& f) {
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    f.ymin = lo - pad;
    f.ymax = hi + pad;
}

inline void axes(std::ostringstream& s, const Frame& f, const std::string& title,
                 const std::string& ylabel) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\""
      << f.height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
      << title << "</text>\n";
    const double x0 = f.left, x1 = f.width - f.right;
    s << "<line x1=\"" << x0 << "\" y1=\"" << f.top << "\" x2=\"" << x0 << "\" y2=\""
      << f.height - f.bottom << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << x0 << "\" y1=\"" << f.height - f.bottom << "\" x2=\"" << x1
      << "\" y2=\"" << f.height - f.bottom << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = f.ymin + (f.ymax - f.ymin) * k / 4.0;
        const double y = f.py(v);
        s << "<line x1=\"" << x0 - 4 << "\" y1=\"" << y << "\" x2=\"" << x0 << "\" y2=\"" << y
          << "\" stroke=\"black\"/>\n";
        s << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt(v)
          << "</text>\n";
    }
    s << "<text x=\"14\" y=\"" << f.height / 2 << "\" transform=\"rotate(-90 14 " << f.height / 2
      << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
}

inline void save(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << body;
}

}  // namespace detail

inline void write_boxplot_svg(const std::string& path, const std::string& title,
                              const std::vector<NamedBox>& boxes) {
    detail::Frame f;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& b : boxes) {
        lo = std::min(lo, b.box.min);
        hi = std::max(hi, b.box.max);
    }
    if (boxes.empty()) lo = 0, hi = 1;
    detail::y_range(lo, hi, f);
    std::ostringstream s;
    detail::axes(s, f, title, "FIT");
    const double plot_w = f.width - f.left - f.right;
    const double slot = plot_w / std::max<std::size_t>(1, boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i].box;
        const double cx = f.left + slot * (static_cast<double>(i) + 0.5);
        const double hw = slot * 0.25;
        const char* color = detail::kPalette[i % 5];
        s << "<line x1=\"" << cx << "\" y1=\"" << f.py(b.whisker_low) << "\" x2=\"" << cx
          << "\" y2=\"" << f.py(b.q1) << "\" stroke=\"black\"/>\n";
        s << "<line x1=\"" << cx << "\" y1=\"" << f.py(b.q3) << "\" x2=\"" << cx << "\" y2=\""
          << f.py(b.whisker_high) << "\" stroke=\"black\"/>\n";
        for (const double w : {b.whisker_low, b.whisker_high}) {
            s << "<line x1=\"" << cx - hw / 2 << "\" y1=\"" << f.py(w) << "\" x2=\"" << cx + hw / 2
              << "\" y2=\"" << f.py(w) << "\" stroke=\"black\"/>\n";
        }
        s << "<rect x=\"" << cx - hw << "\" y=\"" << f.py(b.q3) << "\" width=\"" << 2 * hw
          << "\" height=\"" << std::max(0.5, f.py(b.q1) - f.py(b.q3)) << "\" fill=\"" << color
          << "\" fill-opacity=\"0.35\" stroke=\"" << color << "\"/>\n";
        s << "<line x1=\"" << cx - hw << "\" y1=\"" << f.py(b.median) << "\" x2=\"" << cx + hw
          << "\" y2=\"" << f.py(b.median) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        for (const double o : b.outliers) {
            s << "<circle cx=\"" << cx << "\" cy=\"" << f.py(o) << "\" r=\"2.5\" fill=\"none\" stroke=\""
              << color << "\"/>\n";
        }
        s << "<text x=\"" << cx << "\" y=\"" << f.height - f.bottom + 18
          << "\" text-anchor=\"middle\">" << boxes[i].label << "</text>\n";
    }
    s << "</svg>\n";
    detail::save(path, s.str());
}

inline void write_line_chart_svg(const std::string& path, const std::string& title,
                                 const std::string& xlabel, const std::vector<Series>& series) {
    detail::Frame f;
    double lo = INFINITY, hi = -INFINITY, xlo = INFINITY, xhi = -INFINITY;
    for (const auto& se : series) {
        for (double v : se.y) lo = std::min(lo, v), hi = std::max(hi, v);
        for (double v : se.x) xlo = std::min(xlo, v), xhi = std::max(xhi, v);
    }
    if (!std::isfinite(lo)) lo = 0, hi = 1, xlo = 0, xhi = 1;
    if (!(xhi > xlo)) xlo -= 1, xhi += 1;
    detail::y_range(lo, hi, f);
    const double plot_w = f.width - f.left - f.right - 90;
    const auto px = [&](double v) { return f.left + 10 + plot_w * (v - xlo) / (xhi - xlo); };
    std::ostringstream s;
    detail::axes(s, f, title, "median FIT");
    if (!series.empty()) {
        for (double v : series.front().x) {
            s << "<text x=\"" << px(v) << "\" y=\"" << f.height - f.bottom + 16
              << "\" text-anchor=\"middle\">" << detail::fmt(v) << "</text>\n";
        }
    }
    s << "<text x=\"" << f.left + 10 + plot_w / 2 << "\" y=\"" << f.height - 12
      << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& se = series[k];
        const char* color = detail::kPalette[k % 5];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < se.x.size(); ++i) s << px(se.x[i]) << ',' << f.py(se.y[i]) << ' ';
        s << "\"/>\n";
        for (std::size_t i = 0; i < se.x.size(); ++i) {
            s << "<circle cx=\"" << px(se.x[i]) << "\" cy=\"" << f.py(se.y[i]) << "\" r=\"3\" fill=\""
              << color << "\"/>\n";
        }
        const double ly = f.top + 14.0 * static_cast<double>(k);
        s << "<rect x=\"" << f.width - f.right - 70 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\""
          << color << "\"/>\n";
        s << "<text x=\"" << f.width - f.right - 55 << "\" y=\"" << ly + 9 << "\">" << se.label
          << "</text>\n";
    }
    s << "</svg>\n";
    detail::save(path, s.str());
}

}  // namespace bsi::io
