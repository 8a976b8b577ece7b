// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/render/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace lensfield::cli {

/// Comma-separated table with a header row. Cells are kept as text.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string &name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name)
                return static_cast<int>(i);
        return -1;
    }
    bool has(const std::string &name) const { return column(name) >= 0; }

    std::vector<double> numbers(const std::string &name) const {
        const int c = column(name);
        if (c < 0)
            throw ConfigError(concat("CSV has no column '", name, "'"));
        std::vector<double> out;
        for (const auto &r : rows) {
            try {
                out.push_back(std::stod(r[c]));
            } catch (const std::exception &) {
                throw ConfigError(concat("CSV column '", name, "' holds non-numeric value '", r[c], "'"));
            }
        }
        return out;
    }
};

inline std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

inline CsvTable read_csv(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is)
        throw IoError(concat("cannot open CSV ", path.string()));
    CsvTable t;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto cells = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw ConfigError(concat(path.string(), ":", line_no, ": expected ", t.header.size(), " cells, got ",
                                     cells.size()));
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty())
        throw ConfigError(concat(path.string(), ": empty CSV"));
    return t;
}

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// One panel of a line chart.
struct Chart {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log2_x = false;
    std::vector<Series> series;
};

namespace detail {

// 5x7 glyphs, one byte per row, bit 4 is the leftmost column.
inline const std::array<uint8_t, 7> &glyph(char ch) {
    static const std::array<uint8_t, 7> blank{};
    struct Entry {
        char c;
        std::array<uint8_t, 7> rows;
    };
    static const Entry table[] = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}}, {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}}, {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}}, {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
        {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}}, {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
    };
    const char up = (ch >= 'a' && ch <= 'z') ? char(ch - 'a' + 'A') : ch;
    for (const Entry &e : table)
        if (e.c == up)
            return e.rows;
    return blank;
}

struct Rgb8 {
    uint8_t r, g, b;
};

class Canvas {
  public:
    Canvas(int w, int h) : img_(w, h) { std::fill(img_.rgb.begin(), img_.rgb.end(), uint8_t(255)); }

    void put(int x, int y, Rgb8 c) {
        if (x < 0 || y < 0 || x >= img_.width || y >= img_.height)
            return;
        uint8_t *p = &img_.rgb[(size_t(y) * img_.width + x) * 3];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }

    void line(double x0, double y0, double x1, double y1, Rgb8 c, int thickness = 1) {
        const int n = std::max(1, int(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))));
        for (int i = 0; i <= n; ++i) {
            const double t = double(i) / n;
            const int x = int(std::lround(x0 + t * (x1 - x0))), y = int(std::lround(y0 + t * (y1 - y0)));
            for (int dy = 0; dy < thickness; ++dy)
                for (int dx = 0; dx < thickness; ++dx)
                    put(x + dx - thickness / 2, y + dy - thickness / 2, c);
        }
    }

    void marker(double x, double y, Rgb8 c) {
        const int cx = int(std::lround(x)), cy = int(std::lround(y));
        for (int dy = -3; dy <= 3; ++dy)
            for (int dx = -3; dx <= 3; ++dx)
                if (dx * dx + dy * dy <= 9)
                    put(cx + dx, cy + dy, c);
    }

    static int text_width(const std::string &s, int scale = 1) { return int(s.size()) * 6 * scale; }

    void text(int x, int y, const std::string &s, Rgb8 c, int scale = 1) {
        for (size_t k = 0; k < s.size(); ++k) {
            const auto &g = glyph(s[k]);
            for (int row = 0; row < 7; ++row)
                for (int col = 0; col < 5; ++col)
                    if (g[row] & (0x10 >> col))
                        for (int sy = 0; sy < scale; ++sy)
                            for (int sx = 0; sx < scale; ++sx)
                                put(x + int(k) * 6 * scale + col * scale + sx, y + row * scale + sy, c);
        }
    }

    // Text rotated 90 degrees counter-clockwise, reading bottom to top.
    void text_vertical(int x, int y_bottom, const std::string &s, Rgb8 c) {
        for (size_t k = 0; k < s.size(); ++k) {
            const auto &g = glyph(s[k]);
            for (int row = 0; row < 7; ++row)
                for (int col = 0; col < 5; ++col)
                    if (g[row] & (0x10 >> col))
                        put(x + row, y_bottom - int(k) * 6 - col, c);
        }
    }

    Image8 &image() { return img_; }

  private:
    Image8 img_;
};

inline const std::array<Rgb8, 6> &palette() {
    static const std::array<Rgb8, 6> p{{{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189},
                                        {140, 86, 75}}};
    return p;
}

inline double nice_step(double range, int target) {
    const double raw = range / std::max(1, target);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    return mag * (f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0);
}

inline std::string tick_label(double v, double step) {
    std::ostringstream os;
    const int decimals = std::clamp(int(-std::floor(std::log10(step) + 1e-9)), 0, 6);
    os.setf(std::ios::fixed);
    os.precision(decimals);
    os << (std::abs(v) < 0.5 * step * 1e-6 ? 0.0 : v);
    return os.str();
}

} // namespace detail

/// Draws one panel into `canvas` at vertical offset `top`.
inline void draw_chart(detail::Canvas &canvas, const Chart &chart, int top, int width, int height) {
    using detail::Rgb8;
    const Rgb8 black{0, 0, 0}, grey{215, 215, 215}, dark{90, 90, 90};
    const int left = 70, right = width - 20, plot_top = top + 30, bottom = top + height - 45;

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    auto fx = [&](double x) { return chart.log2_x ? std::log2(x) : x; };
    for (const Series &s : chart.series)
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i]) || (chart.log2_x && !(s.x[i] > 0.0)))
                continue;
            xmin = std::min(xmin, fx(s.x[i]));
            xmax = std::max(xmax, fx(s.x[i]));
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    canvas.text(left, top + 8, chart.title, black, 2);
    if (xmin > xmax) {
        canvas.text(left, (plot_top + bottom) / 2, "NO DATA", dark);
        return;
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        const double pad = std::max(1e-3, std::abs(ymax) * 0.05);
        ymin -= pad;
        ymax += pad;
    }
    const double ystep = detail::nice_step(ymax - ymin, 5);
    ymin = std::floor(ymin / ystep) * ystep;
    ymax = std::ceil(ymax / ystep) * ystep;
    auto px = [&](double x) { return left + (fx(x) - xmin) / (xmax - xmin) * (right - left); };
    auto py = [&](double y) { return bottom - (y - ymin) / (ymax - ymin) * (bottom - plot_top); };

    for (double y = ymin; y <= ymax + 0.5 * ystep; y += ystep) {
        canvas.line(left, py(y), right, py(y), grey);
        const std::string lbl = detail::tick_label(y, ystep);
        canvas.text(left - 6 - detail::Canvas::text_width(lbl), int(py(y)) - 3, lbl, dark);
    }
    if (chart.log2_x) {
        for (int e = int(std::ceil(xmin - 1e-9)); e <= int(std::floor(xmax + 1e-9)); ++e) {
            const double x = std::ldexp(1.0, e);
            canvas.line(px(x), plot_top, px(x), bottom, grey);
            const std::string lbl = detail::tick_label(x, 1.0);
            canvas.text(int(px(x)) - detail::Canvas::text_width(lbl) / 2, bottom + 8, lbl, dark);
        }
    } else {
        const double xstep = detail::nice_step(xmax - xmin, 6);
        for (double x = std::ceil(xmin / xstep) * xstep; x <= xmax + 1e-9 * xstep; x += xstep) {
            canvas.line(px(x), plot_top, px(x), bottom, grey);
            const std::string lbl = detail::tick_label(x, xstep);
            canvas.text(int(px(x)) - detail::Canvas::text_width(lbl) / 2, bottom + 8, lbl, dark);
        }
    }
    canvas.line(left, bottom, right, bottom, black);
    canvas.line(left, plot_top, left, bottom, black);
    canvas.text((left + right - detail::Canvas::text_width(chart.x_label)) / 2, bottom + 24, chart.x_label, black);
    canvas.text_vertical(8, (plot_top + bottom + detail::Canvas::text_width(chart.y_label)) / 2, chart.y_label, black);

    int legend_y = plot_top + 4;
    for (size_t k = 0; k < chart.series.size(); ++k) {
        const Series &s = chart.series[k];
        const Rgb8 c = detail::palette()[k % detail::palette().size()];
        bool have_prev = false;
        double prev_x = 0, prev_y = 0;
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i]) || (chart.log2_x && !(s.x[i] > 0.0)))
                continue;
            const double x = px(s.x[i]), y = py(s.y[i]);
            if (have_prev)
                canvas.line(prev_x, prev_y, x, y, c, 2);
            if (s.x.size() <= 40)
                canvas.marker(x, y, c);
            prev_x = x;
            prev_y = y;
            have_prev = true;
        }
        if (chart.series.size() > 1 || !s.name.empty()) {
            const int lx = right - 10 - detail::Canvas::text_width(s.name) - 24;
            canvas.line(lx, legend_y + 3, lx + 18, legend_y + 3, c, 2);
            canvas.text(lx + 24, legend_y, s.name, black);
            legend_y += 12;
        }
    }
}

/// Panels stacked vertically in one image.
inline Image8 render_charts(const std::vector<Chart> &charts, int width = 640, int panel_height = 320) {
    detail::Canvas canvas(width, panel_height * std::max<int>(1, int(charts.size())));
    for (size_t i = 0; i < charts.size(); ++i)
        draw_chart(canvas, charts[i], int(i) * panel_height, width, panel_height);
    return canvas.image();
}

/// Charts for a CSV written by one of the commands, chosen by its header.
inline std::vector<Chart> charts_for_csv(const CsvTable &t) {
    auto series = [&](const std::string &x, const std::string &y, std::string name = {}) {
        return Series{std::move(name), t.numbers(x), t.numbers(y)};
    };
    if (t.has("rpp") && t.has("val_psnr") && t.has("seconds"))
        return {Chart{"VALIDATION PSNR", "RAYS PER PIXEL", "PSNR (DB)", true, {series("rpp", "val_psnr")}},
                Chart{"RUNTIME", "RAYS PER PIXEL", "SECONDS", true, {series("rpp", "seconds")}}};
    if (t.has("step") && t.has("loss") && t.has("val_psnr"))
        return {Chart{"TRAINING LOSS", "STEP", "LOSS", false, {series("step", "loss")}},
                Chart{"VALIDATION PSNR", "STEP", "PSNR (DB)", false, {series("step", "val_psnr")}}};
    if (t.has("probe") && t.has("rel_err")) {
        Chart c{"GRADIENT CHECK", "PROBE", "LOG10 REL. ERROR", false, {}};
        const int kind = t.column("kind");
        const auto probe = t.numbers("probe"), err = t.numbers("rel_err");
        for (const char *k : {"field", "focus", "aperture"}) {
            Series s{k, {}, {}};
            for (size_t i = 0; i < t.rows.size(); ++i)
                if (kind < 0 || t.rows[i][kind] == k) {
                    s.x.push_back(probe[i]);
                    s.y.push_back(std::log10(std::max(err[i], 1e-12)));
                }
            if (!s.x.empty())
                c.series.push_back(std::move(s));
        }
        return {c};
    }
    throw ConfigError("no chart layout for a CSV with columns " + [&] {
        std::string s;
        for (const auto &h : t.header)
            s += (s.empty() ? "" : ",") + h;
        return s;
    }());
}

/// Writes the PNG chart of a command CSV; the CSV is the only input.
inline void plot_csv(const std::filesystem::path &csv, const std::filesystem::path &png) {
    write_png(png, render_charts(charts_for_csv(read_csv(csv))));
}

} // namespace lensfield::cli
