#include "malbench/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "malbench/common.hpp"

namespace malbench {

std::string_view to_string(PlotKind kind) {
    switch (kind) {
        case PlotKind::Line: return "line";
        case PlotKind::Box: return "box";
        case PlotKind::Regression: return "regression";
    }
    return "line";
}

PlotKind parse_plot_kind(std::string_view text) {
    if (text == "line") return PlotKind::Line;
    if (text == "box") return PlotKind::Box;
    if (text == "regression") return PlotKind::Regression;
    throw Error(ErrorKind::InvalidArgument, "unknown plot kind '" + std::string(text) + "'");
}

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fixed(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(std::string_view text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '-':
                // keeps "--" out of XML comments
                out += out.ends_with('-') ? "&#45;" : "-";
                break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = 0, hi = 1;

    void widen() {
        if (hi == lo) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
};

Range range_of(const std::vector<double>& values) {
    Range r{*std::min_element(values.begin(), values.end()), *std::max_element(values.begin(), values.end())};
    r.widen();
    return r;
}

class Canvas {
public:
    Canvas(Range x, Range y) : x_(x), y_(y) {}

    double px(double x) const { return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom); }

    std::string axes(const std::string& x_label, const std::string& y_label, bool draw_x) const {
        std::string s;
        const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
        s += "<line class=\"axis\" x1=\"" + fixed(x0) + "\" y1=\"" + fixed(y0) + "\" x2=\"" + fixed(x1) + "\" y2=\"" +
             fixed(y0) + "\" stroke=\"#000\"/>\n";
        s += "<line class=\"axis\" x1=\"" + fixed(x0) + "\" y1=\"" + fixed(y0) + "\" x2=\"" + fixed(x0) + "\" y2=\"" +
             fixed(y1) + "\" stroke=\"#000\"/>\n";
        s += label(x0 - 6, y0, "end", format_number(y_.lo));
        s += label(x0 - 6, y1 + 4, "end", format_number(y_.hi));
        if (draw_x) {
            s += label(x0, y0 + 16, "middle", format_number(x_.lo));
            s += label(x1, y0 + 16, "middle", format_number(x_.hi));
        }
        s += label((x0 + x1) / 2, kHeight - 10, "middle", x_label);
        s += "<text x=\"16\" y=\"" + fixed((y0 + y1) / 2) + "\" transform=\"rotate(-90 16 " + fixed((y0 + y1) / 2) +
             ")\" text-anchor=\"middle\" font-size=\"12\">" + escape(y_label) + "</text>\n";
        return s;
    }

    static std::string label(double x, double y, const char* anchor, const std::string& text) {
        return "<text x=\"" + fixed(x) + "\" y=\"" + fixed(y) + "\" text-anchor=\"" + anchor +
               "\" font-size=\"11\">" + escape(text) + "</text>\n";
    }

private:
    Range x_, y_;
};

std::string legend_entry(std::size_t k, const std::string& name) {
    const double y = kTop + 16.0 * static_cast<double>(k);
    const double x = kWidth - kRight + 12;
    return "<rect x=\"" + fixed(x) + "\" y=\"" + fixed(y - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
           kPalette[k % 10] + "\"/>\n" + Canvas::label(x + 14, y + 1, "start", name);
}

std::string header(const PlotSpec& spec) {
    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kWidth) + "\" height=\"" + fixed(kHeight) +
         "\" viewBox=\"0 0 " + fixed(kWidth) + " " + fixed(kHeight) + "\" data-kind=\"" +
         std::string(to_string(spec.kind)) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
    if (!spec.title.empty()) s += Canvas::label(kWidth / 2, 22, "middle", spec.title);
    return s;
}

double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Row {
    std::string group;
    double x = 0, y = 0;
};

std::vector<Row> extract(const Table& table, const PlotSpec& spec, bool need_x) {
    std::vector<std::size_t> group_cols;
    for (const auto& g : spec.group_by) group_cols.push_back(table.column(g));
    const std::size_t y_col = table.column(spec.y);
    const std::size_t x_col = need_x ? table.column(spec.x) : 0;
    std::vector<Row> rows;
    for (const auto& cells : table.rows) {
        if (trim(cells.at(y_col)).empty()) continue;
        Row r;
        for (std::size_t k = 0; k < group_cols.size(); ++k) {
            if (k) r.group += '/';
            r.group += cells.at(group_cols[k]);
        }
        r.y = parse_number(cells[y_col]);
        if (need_x) {
            r.x = parse_number(cells.at(x_col));
            if (spec.log2_x) {
                if (r.x <= 0) throw Error(ErrorKind::InvalidArgument, "log2 axis needs positive x");
                r.x = std::log2(r.x);
            }
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw Error(ErrorKind::Empty, "nothing to plot");
    return rows;
}

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) out += (out.empty() ? "" : "/") + n;
    return out;
}

std::string x_label(const PlotSpec& spec) { return spec.log2_x ? "log2(" + spec.x + ")" : spec.x; }

std::string render_line(const Table& table, const PlotSpec& spec) {
    const auto rows = extract(table, spec, true);
    std::map<std::string, std::map<double, std::vector<double>>> series;
    for (const auto& r : rows) series[r.group][r.x].push_back(r.y);
    std::map<std::string, std::vector<std::pair<double, double>>> points;
    std::vector<double> xs, ys;
    for (auto& [group, by_x] : series) {
        for (auto& [x, values] : by_x) {
            std::sort(values.begin(), values.end());
            const double median = quantile(values, 0.5);
            points[group].emplace_back(x, median);
            xs.push_back(x);
            ys.push_back(median);
        }
    }
    const Canvas canvas(range_of(xs), range_of(ys));
    std::string s = header(spec) + canvas.axes(x_label(spec), spec.y, true);
    std::size_t k = 0;
    for (const auto& [group, pts] : points) {
        s += "<!-- series " + escape(group) + ":";
        for (const auto& [x, y] : pts) s += " " + format_number(x) + "," + format_number(y);
        s += " -->\n<polyline class=\"series\" data-group=\"" + escape(group) + "\" fill=\"none\" stroke=\"" +
             kPalette[k % 10] + "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i) s += ' ';
            s += fixed(canvas.px(pts[i].first)) + "," + fixed(canvas.py(pts[i].second));
        }
        s += "\"/>\n" + legend_entry(k, group);
        ++k;
    }
    return s + "</svg>\n";
}

std::string render_box(const Table& table, const PlotSpec& spec) {
    const auto rows = extract(table, spec, false);
    std::map<std::string, std::vector<double>> groups;
    std::vector<double> ys;
    for (const auto& r : rows) {
        groups[r.group].push_back(r.y);
        ys.push_back(r.y);
    }
    const std::size_t n = groups.size();
    const Canvas canvas({0, static_cast<double>(n)}, range_of(ys));
    std::string s = header(spec) + canvas.axes(spec.group_by.empty() ? "" : join_names(spec.group_by), spec.y, false);
    std::size_t k = 0;
    for (auto& [group, values] : groups) {
        std::sort(values.begin(), values.end());
        const double q1 = quantile(values, 0.25), med = quantile(values, 0.5), q3 = quantile(values, 0.75);
        const double cx = canvas.px(static_cast<double>(k) + 0.5);
        const double half = 0.3 * (canvas.px(1) - canvas.px(0));
        s += "<!-- box " + escape(group) + ": min " + format_number(values.front()) + " q1 " + format_number(q1) +
             " median " + format_number(med) + " q3 " + format_number(q3) + " max " + format_number(values.back()) +
             " n " + std::to_string(values.size()) + " -->\n";
        s += "<line class=\"whisker\" x1=\"" + fixed(cx) + "\" y1=\"" + fixed(canvas.py(values.front())) + "\" x2=\"" +
             fixed(cx) + "\" y2=\"" + fixed(canvas.py(values.back())) + "\" stroke=\"#000\"/>\n";
        s += "<rect class=\"box\" data-group=\"" + escape(group) + "\" x=\"" + fixed(cx - half) + "\" y=\"" +
             fixed(canvas.py(q3)) + "\" width=\"" + fixed(2 * half) + "\" height=\"" +
             fixed(canvas.py(q1) - canvas.py(q3)) + "\" fill=\"" + kPalette[k % 10] + "\" stroke=\"#000\"/>\n";
        s += "<line class=\"median\" x1=\"" + fixed(cx - half) + "\" y1=\"" + fixed(canvas.py(med)) + "\" x2=\"" +
             fixed(cx + half) + "\" y2=\"" + fixed(canvas.py(med)) + "\" stroke=\"#000\" stroke-width=\"2\"/>\n";
        s += Canvas::label(cx, kHeight - kBottom + 16, "middle", group);
        ++k;
    }
    return s + "</svg>\n";
}

std::string render_regression(const Table& table, const PlotSpec& spec) {
    const auto rows = extract(table, spec, true);
    std::vector<std::pair<double, double>> pts;
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
        pts.emplace_back(r.x, r.y);
        xs.push_back(r.x);
        ys.push_back(r.y);
    }
    const LinearFit fit = fit_linear(pts);
    const Range xr = range_of(xs);
    ys.push_back(fit.intercept + fit.slope * xr.lo);
    ys.push_back(fit.intercept + fit.slope * xr.hi);
    const Canvas canvas(xr, range_of(ys));
    std::string s = header(spec) + canvas.axes(x_label(spec), spec.y, true);
    std::map<std::string, std::size_t> colour;
    for (const auto& r : rows) colour.try_emplace(r.group, colour.size());
    for (const auto& r : rows) {
        const std::size_t k = colour.at(r.group);
        s += "<circle class=\"point\" data-group=\"" + escape(r.group) + "\" data-x=\"" + format_number(r.x) +
             "\" data-y=\"" + format_number(r.y) + "\" cx=\"" + fixed(canvas.px(r.x)) + "\" cy=\"" +
             fixed(canvas.py(r.y)) + "\" r=\"3\" fill=\"" + kPalette[k % 10] + "\" fill-opacity=\"0.7\"/>\n";
    }
    s += "<!-- fit slope " + format_number(fit.slope) + " intercept " + format_number(fit.intercept) + " -->\n";
    s += "<line class=\"fit\" data-slope=\"" + format_number(fit.slope) + "\" data-intercept=\"" +
         format_number(fit.intercept) + "\" x1=\"" + fixed(canvas.px(xr.lo)) + "\" y1=\"" +
         fixed(canvas.py(fit.intercept + fit.slope * xr.lo)) + "\" x2=\"" + fixed(canvas.px(xr.hi)) + "\" y2=\"" +
         fixed(canvas.py(fit.intercept + fit.slope * xr.hi)) + "\" stroke=\"#000\" stroke-width=\"2\"/>\n";
    for (const auto& [group, k] : colour) {
        if (!group.empty()) s += legend_entry(k, group);
    }
    return s + "</svg>\n";
}

}  // namespace

std::string render_plot(const Table& table, const PlotSpec& spec) {
    switch (spec.kind) {
        case PlotKind::Line: return render_line(table, spec);
        case PlotKind::Box: return render_box(table, spec);
        case PlotKind::Regression: return render_regression(table, spec);
    }
    return {};
}

void emit_plot(const Table& table, const PlotSpec& spec) {
    if (spec.output.empty()) throw Error(ErrorKind::InvalidArgument, "plot needs an output path");
    write_file_atomic(spec.output, render_plot(table, spec));
}

}  // namespace malbench
