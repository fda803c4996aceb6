#include <doctest.h>

#include <cmath>
#include <regex>

#include "malbench/common.hpp"
#include "malbench/plot.hpp"
#include "support.hpp"

using namespace malbench;

namespace {

Table table(std::vector<std::string> header, std::vector<std::vector<std::string>> rows) {
    Table t;
    t.header = std::move(header);
    t.rows = std::move(rows);
    return t;
}

std::vector<std::string> matches(const std::string& text, const std::string& pattern) {
    std::vector<std::string> out;
    const std::regex re(pattern);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        out.push_back((*it)[1].str());
    }
    return out;
}

double attribute(const std::string& element, const std::string& name) {
    const auto found = matches(element, " " + name + "=\"([^\"]*)\"");
    REQUIRE(found.size() == 1);
    return parse_number(found[0]);
}

}  // namespace

TEST_CASE("plot kinds round-trip") {
    for (PlotKind k : {PlotKind::Line, PlotKind::Box, PlotKind::Regression}) CHECK(parse_plot_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_plot_kind("pie"), Error);
}

TEST_CASE("a three-point series draws three vertices") {
    const auto t = table({"size", "acc", "alg"}, {{"100", "0.5", "DT"}, {"200", "0.6", "DT"}, {"400", "0.7", "DT"}});
    PlotSpec spec;
    spec.kind = PlotKind::Line;
    spec.group_by = {"alg"};
    spec.x = "size";
    spec.y = "acc";
    const auto svg = render_plot(t, spec);
    const auto lines = matches(svg, "<polyline class=\"series\"[^>]* points=\"([^\"]*)\"");
    REQUIRE(lines.size() == 1);
    CHECK(split(lines[0], ' ').size() == 3);
    CHECK(svg.find("<!-- series DT: 100,0.5 200,0.6 400,0.7 -->") != std::string::npos);
}

TEST_CASE("line plots take the median per x within each group") {
    const auto t = table({"size", "acc", "alg", "fs"}, {{"100", "0.5", "DT", "p"},
                                                         {"100", "0.9", "DT", "p"},
                                                         {"100", "0.6", "DT", "p"},
                                                         {"200", "0.8", "DT", "p"},
                                                         {"100", "0.1", "RF", "p"},
                                                         {"200", "", "RF", "p"}});
    PlotSpec spec;
    spec.group_by = {"alg", "fs"};
    spec.x = "size";
    spec.y = "acc";
    spec.log2_x = true;
    const auto svg = render_plot(t, spec);
    CHECK(matches(svg, "(<polyline)").size() == 2);
    CHECK(svg.find("<!-- series DT/p: " + format_number(std::log2(100.0)) + ",0.6 " +
                   format_number(std::log2(200.0)) + ",0.8 -->") != std::string::npos);
    CHECK(svg.find("<!-- series RF/p: " + format_number(std::log2(100.0)) + ",0.1 -->") != std::string::npos);
}

TEST_CASE("a constant column makes a zero-height box") {
    const auto t = table({"fpr"}, {{"0.01"}, {"0.01"}, {"0.01"}, {"0.01"}});
    PlotSpec spec;
    spec.kind = PlotKind::Box;
    spec.y = "fpr";
    const auto svg = render_plot(t, spec);
    const auto boxes = matches(svg, "(<rect class=\"box\"[^>]*>)");
    REQUIRE(boxes.size() == 1);
    CHECK(attribute(boxes[0], "height") == 0.0);
    CHECK(svg.find("min 0.01 q1 0.01 median 0.01 q3 0.01 max 0.01 n 4") != std::string::npos);
}

TEST_CASE("box quartiles interpolate linearly") {
    const auto t = table({"v", "g"}, {{"1", "a"}, {"2", "a"}, {"3", "a"}, {"4", "a"}, {"5", "a"}, {"9", "b"}});
    PlotSpec spec;
    spec.kind = PlotKind::Box;
    spec.group_by = {"g"};
    spec.y = "v";
    const auto svg = render_plot(t, spec);
    CHECK(svg.find("<!-- box a: min 1 q1 2 median 3 q3 4 max 5 n 5 -->") != std::string::npos);
    CHECK(matches(svg, "(<rect class=\"box\")").size() == 2);
}

TEST_CASE("the regression overlay matches the least-squares fit") {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::pair<double, double>> pts;
    for (int k = 0; k < 6; ++k) {
        const double x = 100.0 * std::pow(2.0, k);
        const double y = 0.02 - 0.001 * k;
        rows.push_back({format_number(x), format_number(y)});
        pts.emplace_back(std::log2(x), y);
    }
    PlotSpec spec;
    spec.kind = PlotKind::Regression;
    spec.x = "level";
    spec.y = "delta";
    spec.log2_x = true;
    const auto svg = render_plot(table({"level", "delta"}, rows), spec);
    const auto fit = fit_linear(pts);
    const auto lines = matches(svg, "(<line class=\"fit\"[^>]*>)");
    REQUIRE(lines.size() == 1);
    CHECK(attribute(lines[0], "data-slope") == fit.slope);
    CHECK(attribute(lines[0], "data-intercept") == fit.intercept);

    // Collinear input: every drawn point sits on the drawn line.
    const double x1 = attribute(lines[0], "x1"), y1 = attribute(lines[0], "y1");
    const double x2 = attribute(lines[0], "x2"), y2 = attribute(lines[0], "y2");
    const auto circles = matches(svg, "(<circle class=\"point\"[^>]*>)");
    REQUIRE(circles.size() == 6);
    for (const auto& c : circles) {
        const double cx = attribute(c, "cx"), cy = attribute(c, "cy");
        const double distance =
            std::fabs((y2 - y1) * cx - (x2 - x1) * cy + x2 * y1 - y2 * x1) / std::hypot(y2 - y1, x2 - x1);
        CHECK(distance < 0.02);
    }
}

TEST_CASE("plots fail on missing columns and empty input") {
    const auto t = table({"a", "b"}, {{"1", "2"}});
    PlotSpec spec;
    spec.x = "a";
    spec.y = "c";
    try {
        render_plot(t, spec);
        FAIL("expected MissingColumn");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingColumn);
    }
    spec.y = "b";
    try {
        render_plot(table({"a", "b"}, {}), spec);
        FAIL("expected Empty");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Empty);
    }
}

TEST_CASE("emitted files are byte-identical across calls") {
    testing::TempDir dir;
    const auto t = table({"size", "acc", "alg"},
                         {{"100", "0.5", "DT"}, {"200", "0.6", "DT"}, {"100", "0.55", "RF"}, {"200", "0.7", "RF"}});
    PlotSpec spec;
    spec.group_by = {"alg"};
    spec.x = "size";
    spec.y = "acc";
    spec.title = "accuracy & size <desk>";
    spec.output = dir.file("a.svg");
    emit_plot(t, spec);
    spec.output = dir.file("b.svg");
    emit_plot(t, spec);
    const auto a = testing::slurp(dir.file("a.svg"));
    CHECK(a == testing::slurp(dir.file("b.svg")));
    CHECK(a.find("accuracy &amp; size &lt;desk&gt;") != std::string::npos);
    CHECK(a.ends_with("</svg>\n"));
}
