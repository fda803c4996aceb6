#pragma once

// Static SVG figures: line, box and regression plots over a CSV table.

#include <string>
#include <vector>

#include "malbench/analyze.hpp"

namespace malbench {

enum class PlotKind { Line, Box, Regression };

std::string_view to_string(PlotKind kind);
PlotKind parse_plot_kind(std::string_view text);

struct PlotSpec {
    PlotKind kind = PlotKind::Line;
    std::vector<std::string> group_by;  // one series or box per distinct combination
    std::string x;                      // unused by box plots
    std::string y;
    bool log2_x = false;                // plot and fit against log2(x)
    std::string title;
    std::string output;
};

/// Line plots draw one polyline per group with the median y at each distinct
/// x. Box plots draw quartiles and min/max whiskers of y per group.
/// Regression plots scatter (x, y) and overlay the least-squares line.
/// Rows with an empty y cell are skipped. Throws MissingColumn and Empty.
std::string render_plot(const Table& table, const PlotSpec& spec);

void emit_plot(const Table& table, const PlotSpec& spec);

}  // namespace malbench
