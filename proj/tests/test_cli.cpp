#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "malbench/analyze.hpp"
#include "malbench/cli.hpp"
#include "malbench/orchestrate.hpp"
#include "support.hpp"

using namespace malbench;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "malbench");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_subcommand(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("usage errors exit with 2 and print usage") {
    const auto unknown = cli({"train", "--bogus"});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("error:") != std::string::npos);
    CHECK(unknown.err.find("--algorithm") != std::string::npos);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({}).code == 2);
    CHECK(cli({"train", "-d", "x.csv", "-a", "ANN", "--seed", "1", "-o", "m"}).code == 2);
}

TEST_CASE("every subcommand has help") {
    for (const char* sub : {"vectorize", "index", "sample", "train", "evaluate", "run", "analyze", "plot", "synth"}) {
        CAPTURE(sub);
        const auto r = cli({sub, "--help"});
        CHECK(r.code == 0);
        CHECK(r.out.find("Usage") != std::string::npos);
    }
    CHECK(cli({"--help"}).out.find("synth") != std::string::npos);
}

TEST_CASE("operational failures exit with 1") {
    const auto r = cli({"index", "-f", "/nonexistent/frags", "-o", "/tmp/x.csv"});
    CHECK(r.code == 1);
    CHECK(r.err.find("MissingFragment") != std::string::npos);
}

TEST_CASE("the pipeline runs end to end through the command line") {
    testing::TempDir dir;
    const auto corpus = dir.file("c.jsonl");
    REQUIRE(cli({"synth", "-o", corpus, "--n", "3000", "--families", "4", "--seed", "5"}).code == 0);
    REQUIRE(cli({"vectorize", "-i", corpus, "-o", dir.file("frags"), "--fragment-size", "1000"}).code == 0);
    const auto idx = cli({"index", "-f", dir.file("frags"), "-o", dir.file("idx.csv")});
    REQUIRE(idx.code == 0);
    CHECK(idx.out == "indexed 3000 rows\n");

    const auto smp = cli({"sample", "-f", dir.file("frags"), "--index", dir.file("idx.csv"), "--role", "train",
                          "--n-malware", "50", "--feature-set", "parsed", "--seed", "1", "-o", dir.file("train.csv")});
    REQUIRE(smp.code == 0);
    CHECK(smp.out == "train_50_malware_x1_benign_parsed_s1: 100 rows\n");
    REQUIRE(cli({"sample", "-f", dir.file("frags"), "--role", "test", "--n-malware", "20", "--ratio", "4",
                 "--feature-set", "parsed", "--seed", "1", "-o", dir.file("test.csv")})
                .code == 0);
    REQUIRE(cli({"train", "-d", dir.file("train.csv"), "-a", "DT", "--seed", "1", "-o", dir.file("dt.model")}).code ==
            0);
    const auto ev = cli({"evaluate", "-m", dir.file("dt.model"), "-d", dir.file("test.csv"), "--measure", "real-life"});
    REQUIRE(ev.code == 0);
    CHECK(ev.out.starts_with("perf_measure,performance,other_info\nreal-life,"));

    testing::write_lines(dir.file("desk.cfg"), {"fragments_dir = frags", "index = idx.csv", "train_levels = 25, 50, 100",
                                                "q2_test_malware = 20", "q2_ratio = 4", "q3_train_malware = 100",
                                                "q3_test_malware = 20", "q3_ratios = 1, 2", "seeds = 1, 2",
                                                "algorithms = DT, RF", "feature_sets = parsed"});
    const auto expected = plan(ExperimentConfig::load(dir.file("desk.cfg"))).runs.size();
    CHECK(expected == 2 * 1 * 2 * (3 + 3 + 2));
    const auto run = cli({"run", "-c", dir.file("desk.cfg"), "-o", dir.file("results.csv"), "--workers", "2"});
    REQUIRE(run.code == 0);
    const auto rows = read_observations(dir.file("results.csv"));
    CHECK(rows.size() == expected);
    const auto resumed = cli({"run", "-c", dir.file("desk.cfg"), "-o", dir.file("results.csv"), "--resume"});
    CHECK(resumed.out.find("0 executed, " + std::to_string(expected) + " resumed") != std::string::npos);

    const auto corr = cli({"analyze", "-r", dir.file("results.csv"), "-q", "1"});
    REQUIRE(corr.code == 0);
    const auto table = Table::parse(corr.out);
    CHECK(table.header == std::vector<std::string>{"algorithm", "r", "n"});
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0][0] == "DT");
    CHECK(table.rows[0][2] == "6");

    const auto sens = cli({"analyze", "-r", dir.file("results.csv"), "-q", "1", "--mode", "sensitivity", "-o",
                           dir.file("sens.csv")});
    REQUIRE(sens.code == 0);
    CHECK(read_table(dir.file("sens.csv")).rows.size() == 2 * 2 * 2);
    REQUIRE(cli({"plot", "-t", dir.file("sens.csv"), "-k", "regression", "--x", "log2_size", "--y", "delta",
                 "--group-by", "algorithm", "-o", dir.file("fit.svg")})
                .code == 0);
    REQUIRE(cli({"plot", "-t", dir.file("results.csv"), "--x", "train_set_size", "--y", "performance", "--group-by",
                 "algorithm,feature_set", "--where", "question=1", "--log2-x", "-o", dir.file("q1.svg")})
                .code == 0);
    CHECK(testing::slurp(dir.file("q1.svg")).find("<polyline") != std::string::npos);
    CHECK(cli({"plot", "-t", dir.file("results.csv"), "--y", "nope", "-k", "box", "-o", dir.file("x.svg")}).code == 1);
}
