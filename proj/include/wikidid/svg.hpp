#pragma once

// Self-contained SVG emission for the two figure styles: per-year overlaid
// daily series with changepoint markers, and per-window effect curves with
// shaded CI bands. Output is deterministic for fixed inputs: fixed-precision
// coordinates, stable element order, no timestamps.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "wikidid/core.hpp"
#include "wikidid/did.hpp"
#include "wikidid/series.hpp"

namespace wikidid::svg {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

class Document {
public:
    Document(double width, double height) : width_(width), height_(height) {}

    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double stroke_width, const std::string& css_class = "") {
        body_ += "<line";
        if (!css_class.empty()) body_ += " class=\"" + css_class + "\"";
        body_ += " x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) + "\" y2=\"" +
                 fmt(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + fmt(stroke_width) +
                 "\"/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                  double stroke_width, const std::string& css_class = "",
                  const std::string& dash = "") {
        if (pts.empty()) return;
        body_ += "<polyline";
        if (!css_class.empty()) body_ += " class=\"" + css_class + "\"";
        body_ += " fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + fmt(stroke_width) +
                 "\"";
        if (!dash.empty()) body_ += " stroke-dasharray=\"" + dash + "\"";
        body_ += " points=\"";
        for (const auto& [x, y] : pts) body_ += fmt(x) + "," + fmt(y) + " ";
        body_.pop_back();
        body_ += "\"/>\n";
    }

    void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill,
                 double opacity, const std::string& css_class = "") {
        if (pts.empty()) return;
        body_ += "<polygon";
        if (!css_class.empty()) body_ += " class=\"" + css_class + "\"";
        body_ += " fill=\"" + fill + "\" fill-opacity=\"" + fmt(opacity) + "\" stroke=\"none\" points=\"";
        for (const auto& [x, y] : pts) body_ += fmt(x) + "," + fmt(y) + " ";
        body_.pop_back();
        body_ += "\"/>\n";
    }

    void text(double x, double y, const std::string& s, double size,
              const std::string& anchor = "start", const std::string& fill = "#333") {
        body_ += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"" + fmt(size) +
                 "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\" fill=\"" + fill +
                 "\">" + escape(s) + "</text>\n";
    }

    std::string str() const {
        return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width_) +
               "\" height=\"" + fmt(height_) + "\" viewBox=\"0 0 " + fmt(width_) + " " +
               fmt(height_) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
               body_ + "</svg>\n";
    }

private:
    double width_, height_;
    std::string body_;
};

// Linear value -> pixel mapping over a fixed frame.
struct Scale {
    double v_lo = 0.0, v_hi = 1.0;
    double px_lo = 0.0, px_hi = 1.0;
    double operator()(double v) const {
        return px_lo + (v - v_lo) / (v_hi - v_lo) * (px_hi - px_lo);
    }
};

struct Frame {
    double width = 720, height = 360;
    double left = 60, right = 20, top = 34, bottom = 36;
};

inline constexpr const char* kYearColors[3] = {"#bdbdbd", "#7fb2d9", "#d95f02"};

struct YearSeries {
    std::string label; // e.g. "2018"
    std::vector<std::pair<int, double>> points; // (day-of-year index, value)
};

struct MarkerLine {
    int day_of_year = 0;
    std::string css_class; // cp-mobility / cp-normality
    std::string color;
};

// Overlaid per-year daily series (x = day of year).
inline std::string series_chart(const std::string& title, const std::vector<YearSeries>& years,
                                const std::vector<MarkerLine>& markers) {
    const Frame f;
    double v_lo = 0.0, v_hi = 1.0;
    bool any = false;
    for (const auto& ys : years)
        for (const auto& [x, v] : ys.points) {
            if (!any) {
                v_lo = v_hi = v;
                any = true;
            }
            v_lo = std::min(v_lo, v);
            v_hi = std::max(v_hi, v);
        }
    if (!any) v_lo = 0.0, v_hi = 1.0;
    if (v_hi == v_lo) v_hi = v_lo + 1.0;
    const double pad = 0.05 * (v_hi - v_lo);
    const Scale x{0.0, 366.0, f.left, f.width - f.right};
    const Scale y{v_lo - pad, v_hi + pad, f.height - f.bottom, f.top};

    Document doc(f.width, f.height);
    doc.text(f.left, 20, title, 13);
    doc.line(f.left, f.height - f.bottom, f.width - f.right, f.height - f.bottom, "#888", 1.0);
    doc.line(f.left, f.top, f.left, f.height - f.bottom, "#888", 1.0);

    // Month ticks on the first of each month (non-leap day counts).
    static constexpr int kMonthStart[12] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};
    static constexpr const char* kMonthName[12] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                   "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    for (int m = 0; m < 12; ++m) {
        const double px = x(kMonthStart[m]);
        doc.line(px, f.height - f.bottom, px, f.height - f.bottom + 4, "#888", 1.0);
        doc.text(px, f.height - f.bottom + 16, kMonthName[m], 9, "middle");
    }
    for (int t = 0; t <= 4; ++t) {
        const double v = v_lo + (v_hi - v_lo) * t / 4.0;
        doc.line(f.left - 4, y(v), f.left, y(v), "#888", 1.0);
        doc.text(f.left - 8, y(v) + 3, fmt(v), 9, "end");
    }

    for (const auto& m : markers) {
        doc.line(x(m.day_of_year), f.top, x(m.day_of_year), f.height - f.bottom, m.color, 1.2,
                 m.css_class);
    }
    for (std::size_t i = 0; i < years.size(); ++i) {
        std::vector<std::pair<double, double>> pts;
        pts.reserve(years[i].points.size());
        for (const auto& [dx, v] : years[i].points)
            if (!std::isnan(v)) pts.emplace_back(x(dx), y(v));
        const char* color = kYearColors[std::min<std::size_t>(i, 2)];
        doc.polyline(pts, color, 1.4, "year-" + years[i].label);
        doc.text(f.width - f.right - 40.0 * static_cast<double>(years.size() - i), 20,
                 years[i].label, 10, "start", color);
    }
    return doc.str();
}

// Effect-vs-window curve with a shaded CI band and a zero reference line.
inline std::string effect_chart(const std::string& title, const EffectSeries& series,
                                int n_windows) {
    const Frame f;
    double v_lo = 0.0, v_hi = 0.0;
    for (const auto& p : series.points) {
        v_lo = std::min(v_lo, p.ci_lo);
        v_hi = std::max(v_hi, p.ci_hi);
    }
    if (v_hi == v_lo) v_hi = v_lo + 1.0;
    const double pad = 0.08 * (v_hi - v_lo);
    const Scale x{0.0, static_cast<double>(std::max(1, n_windows - 1)), f.left, f.width - f.right};
    const Scale y{v_lo - pad, v_hi + pad, f.height - f.bottom, f.top};

    Document doc(f.width, f.height);
    doc.text(f.left, 20, title, 13);
    doc.line(f.left, f.height - f.bottom, f.width - f.right, f.height - f.bottom, "#888", 1.0);
    doc.line(f.left, f.top, f.left, f.height - f.bottom, "#888", 1.0);
    for (int t = 0; t < n_windows; t += 20) {
        doc.line(x(t), f.height - f.bottom, x(t), f.height - f.bottom + 4, "#888", 1.0);
        doc.text(x(t), f.height - f.bottom + 16, std::to_string(t), 9, "middle");
    }
    for (int t = 0; t <= 4; ++t) {
        const double v = (v_lo - pad) + (v_hi - v_lo + 2 * pad) * t / 4.0;
        doc.line(f.left - 4, y(v), f.left, y(v), "#888", 1.0);
        doc.text(f.left - 8, y(v) + 3, fmt(v), 9, "end");
    }
    doc.line(f.left, y(0.0), f.width - f.right, y(0.0), "#aaa", 1.0, "zero-line");

    std::vector<std::pair<double, double>> band;
    band.reserve(series.points.size() * 2);
    for (const auto& p : series.points) band.emplace_back(x(p.window_n), y(p.ci_hi));
    for (auto it = series.points.rbegin(); it != series.points.rend(); ++it)
        band.emplace_back(x(it->window_n), y(it->ci_lo));
    doc.polygon(band, "#d95f02", 0.25, "ci-band");

    std::vector<std::pair<double, double>> curve;
    curve.reserve(series.points.size());
    for (const auto& p : series.points) curve.emplace_back(x(p.window_n), y(p.delta));
    doc.polyline(curve, "#d95f02", 1.6, "delta-curve");
    return doc.str();
}

} // namespace wikidid::svg
