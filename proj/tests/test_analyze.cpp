#include <doctest.h>

#include <cmath>
#include <map>

#include "malbench/analyze.hpp"
#include "malbench/common.hpp"
#include "oracles.hpp"

using namespace malbench;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error raised");
    return ErrorKind::InvalidArgument;
}

Observation obs(int q, std::string alg, std::string fs, std::uint64_t size, double perf, std::uint64_t seed,
                std::string measure = "accuracy") {
    Observation o;
    o.question = q;
    o.algorithm = std::move(alg);
    o.feature_set = std::move(fs);
    o.train_set_size = size;
    o.test_set_size = size;
    o.test_set_ratio = "1:1";
    o.perf_measure = std::move(measure);
    o.performance = perf;
    o.seed = seed;
    return o;
}

}  // namespace

TEST_CASE("pearson examples") {
    const std::vector<double> x = {1, 2, 3, 4, 5};
    std::vector<double> up, down;
    for (double v : x) {
        up.push_back(2 * v + 3);
        down.push_back(-v);
    }
    CHECK(pearson(x, up) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(pearson(x, down) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(pearson(x, up) <= 1.0);
    CHECK(kind_of([&] { pearson(x, std::vector<double>(5, 0.3)); }) == ErrorKind::ZeroVariance);
    CHECK(kind_of([] { pearson(std::vector<double>{1}, std::vector<double>{2}); }) == ErrorKind::ZeroVariance);
    CHECK(kind_of([&] { pearson(x, std::vector<double>{1, 2}); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("pearson is symmetric and affine invariant") {
    SplitMix64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + rng.bounded(60);
        std::vector<double> x(n), y(n), ax(n), ny(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.normal();
            y[i] = 0.4 * x[i] + rng.normal();
            ax[i] = 3.5 * x[i] - 11;
            ny[i] = -0.25 * y[i] + 2;
        }
        const double r = pearson(x, y);
        CHECK(std::fabs(r - oracle::covariance_pearson(x, y)) < 1e-12);
        CHECK(std::fabs(r - pearson(y, x)) < 1e-14);
        CHECK(std::fabs(r - pearson(ax, y)) < 1e-12);
        CHECK(std::fabs(r + pearson(x, ny)) < 1e-12);
    }
}

TEST_CASE("the appendix sample parses and its question-1 correlation matches the oracle") {
    const auto rows = read_observations(std::string(MALBENCH_TEST_DATA) + "/appendix_sample.csv");
    REQUIRE(rows.size() == 25);
    CHECK(rows[0].question == 3);
    CHECK(rows[0].algorithm == "RF");
    CHECK(rows[0].test_set_ratio == "1:16");
    CHECK(rows[0].other_info == 0.011050);
    CHECK_FALSE(rows[1].other_info.has_value());
    CHECK(rows[1].performance == 0.763242);

    std::vector<double> x, y;
    for (const auto& o : rows) {
        CHECK(o.train_set_size % 2 == 0);
        const auto k = parse_integer(std::string_view(o.test_set_ratio).substr(2));
        if (o.question == 1) {
            CHECK(o.test_set_size == o.train_set_size);
            x.push_back(static_cast<double>(o.train_set_size));
            y.push_back(*o.performance);
        } else {
            CHECK(o.test_set_size == 1250 * static_cast<std::uint64_t>(1 + k));
        }
    }
    REQUIRE(x.size() == 13);
    CHECK(std::fabs(pearson(x, y) - oracle::covariance_pearson(x, y)) < 1e-12);

    const auto table = correlation_table(rows, 1, "accuracy");
    std::size_t pooled = 0;
    for (const auto& c : table) pooled += c.n;
    CHECK(pooled == 13);
    REQUIRE(table.size() == 4);
    CHECK(table[0].algorithm == "DT");
    CHECK(table[3].algorithm == "SVM");
}

TEST_CASE("observations round-trip through CSV") {
    std::vector<Observation> rows = {obs(1, "DT", "parsed", 200, 0.645, 1339)};
    Observation rl = obs(2, "LGBM", "format_agnostic", 800, 0.0848, 1337, "real-life");
    rl.test_set_size = 161250;
    rl.test_set_ratio = "1:128";
    rl.other_info = 0.01;
    rows.push_back(rl);
    const auto text = observations_to_csv(rows);
    CHECK(text.starts_with(std::string(kResultsHeader) + "\n"));
    CHECK(parse_observations(text) == rows);
    CHECK(format_observation(rows[0]) == "1,DT,parsed,200,200,1:1,accuracy,0.645,,1339");
    CHECK(kind_of([] { parse_observations("question,algorithm\n1,DT\n"); }) == ErrorKind::MissingColumn);
    const std::string bad = std::string(kResultsHeader) + "\nx,DT,parsed,200,200,1:1,accuracy,0.6,,1\n";
    CHECK(kind_of([&] { parse_observations(bad); }) == ErrorKind::SchemaViolation);
}

TEST_CASE("generic tables quote awkward cells") {
    Table t;
    t.header = {"name", "note"};
    t.rows = {{"a", "plain"}, {"b", "has,comma"}, {"c", "has \"quote\""}};
    const auto back = Table::parse(t.to_csv());
    CHECK(back.header == t.header);
    CHECK(back.rows == t.rows);
    CHECK(back.column("note") == 1);
    CHECK(kind_of([&] { back.column("missing"); }) == ErrorKind::MissingColumn);
}

TEST_CASE("correlation table groups by algorithm and pools the rest") {
    std::vector<Observation> rows;
    for (const char* alg : {"SVM", "LGBM", "RF", "DT"})
        for (const char* fs : {"parsed", "combined"})
            for (std::uint64_t seed : {1, 2})
                for (std::uint64_t size : {100, 200, 400, 800}) rows.push_back(obs(1, alg, fs, size, 1e-4 * size + 0.3, seed));
    rows.push_back(obs(2, "DT", "parsed", 100, 0.9, 1, "real-life"));
    const auto table = correlation_table(rows, 1, "accuracy");
    REQUIRE(table.size() == 4);
    const std::vector<std::string> order = {"DT", "RF", "LGBM", "SVM"};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(table[i].algorithm == order[i]);
        CHECK(table[i].r == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(table[i].n == 16);
    }
}

TEST_CASE("one-at-a-time deltas") {
    const auto d = oat_sensitivities({{100, 0.5}, {200, 0.52}, {400, 0.56}});
    REQUIRE(d.size() == 2);
    CHECK(d[0].level == 100);
    CHECK(d[0].delta == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(d[1].level == 200);
    CHECK(d[1].delta == doctest::Approx(0.04).epsilon(1e-12));
    for (const auto& p : oat_sensitivities({{100, 0.7}, {200, 0.7}, {400, 0.7}})) CHECK(p.delta == 0.0);
    const auto rel = oat_sensitivities({{100, 0.5}, {200, 0.6}}, DeltaMode::Relative);
    CHECK(rel[0].delta == doctest::Approx(0.2));
    CHECK(kind_of([] { oat_sensitivities({{100, 0.5}, {300, 0.6}}); }) == ErrorKind::NonDoublingLevels);
}

TEST_CASE("repeated OAT matches a per-slice difference loop and telescopes") {
    SplitMix64 rng(8);
    std::vector<Observation> rows;
    std::map<std::tuple<std::string, std::string, std::uint64_t>, std::map<std::uint64_t, double>> truth;
    for (const char* alg : {"DT", "RF"})
        for (const char* fs : {"parsed", "format_agnostic"})
            for (std::uint64_t seed : {1337, 1338, 1339})
                for (std::uint64_t size = 100; size <= 3200; size *= 2) {
                    const double perf = 0.5 + 0.4 * rng.uniform();
                    rows.push_back(obs(1, alg, fs, size, perf, seed));
                    truth[{alg, fs, seed}][size] = perf;
                }
    // Shuffle so grouping cannot rely on input order.
    for (std::size_t k = rows.size(); k > 1; --k) std::swap(rows[k - 1], rows[rng.bounded(k)]);

    const auto deltas = repeated_oat(rows, 1, "accuracy");
    CHECK(deltas.size() == 2 * 2 * 3 * 5);
    std::map<std::tuple<std::string, std::string, std::uint64_t>, double> sums;
    for (const auto& s : deltas) {
        const auto& series = truth[{s.algorithm, s.feature_set, s.seed}];
        const auto level = static_cast<std::uint64_t>(s.point.level);
        CHECK(s.point.delta == series.at(2 * level) - series.at(level));
        sums[{s.algorithm, s.feature_set, s.seed}] += s.point.delta;
    }
    for (const auto& [key, series] : truth) {
        CHECK(sums[key] == doctest::Approx(series.rbegin()->second - series.begin()->second).epsilon(1e-12));
    }

    rows.push_back(rows.front());
    CHECK(kind_of([&] { repeated_oat(rows, 1, "accuracy"); }) == ErrorKind::InvalidLevels);
}

TEST_CASE("linear fits") {
    const auto exact = fit_linear({{1, 5}, {2, 7}, {3, 9}, {7, 17}});
    CHECK(exact.slope == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(exact.intercept == doctest::Approx(3.0).epsilon(1e-14));

    // Residuals +e and -e at every x leave the line unchanged.
    std::vector<std::pair<double, double>> pts;
    for (double x = 7; x <= 16; ++x) {
        const double y = -0.003 * x + 0.04;
        pts.emplace_back(x, y + 0.01);
        pts.emplace_back(x, y - 0.01);
    }
    const auto sym = fit_linear(pts);
    CHECK(std::fabs(sym.slope - -0.003) < 1e-12);
    CHECK(std::fabs(sym.intercept - 0.04) < 1e-12);

    CHECK(kind_of([] { fit_linear({{3, 1}, {3, 2}}); }) == ErrorKind::DegenerateX);
    CHECK(kind_of([] { fit_linear({}); }) == ErrorKind::DegenerateX);
}
