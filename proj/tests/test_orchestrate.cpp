#include <doctest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "malbench/evaluate.hpp"
#include "malbench/orchestrate.hpp"
#include "support.hpp"

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

// One small synthetic corpus shared by the execution tests.
struct Corpus {
    testing::TempDir dir;
    FragmentManifest manifest;
    Pools pools;

    Corpus() {
        SynthConfig cfg;
        cfg.n_samples = 3000;
        cfg.families = SynthConfig::default_families(4);
        cfg.separability = 1.5;
        cfg.seed = 12;
        manifest = testing::synth_fragments(dir, cfg, 1000);
        pools = partition_pools(build_metadata_index(manifest));
    }
};

const Corpus& corpus() {
    static const Corpus c;
    return c;
}

ExperimentConfig desk_config() {
    return ExperimentConfig::parse(
        "train_levels = 25, 50, 100\n"
        "q2_test_malware = 20\n"
        "q2_ratio = 8\n"
        "q3_train_malware = 100\n"
        "q3_test_malware = 20\n"
        "q3_ratios = 1, 2, 4\n"
        "seeds = 1, 2\n"
        "algorithms = DT, LGBM, SVM\n"
        "feature_sets = parsed, format_agnostic\n");
}

Hyperparams quick() {
    Hyperparams h;
    h.boost.num_rounds = 10;
    h.boost.min_data_in_leaf = 5;
    return h;
}

}  // namespace

TEST_CASE("the default grid holds 1080 runs") {
    const auto p = plan(ExperimentConfig{});
    CHECK(p.runs.size() == 1080);
    std::map<int, std::size_t> per_question;
    std::set<std::string> keys;
    for (const auto& r : p.runs) {
        ++per_question[r.question];
        keys.insert(observation_key(r));
    }
    CHECK(per_question[1] == 396);
    CHECK(per_question[2] == 396);
    CHECK(per_question[3] == 288);
    CHECK(keys.size() == 1080);

    for (const auto& r : p.runs) {
        if (r.question == 1) {
            CHECK(r.test_n_malware == r.train_n_malware);
            CHECK(r.test_benign_ratio == 1);
            CHECK(r.perf_measure == "accuracy");
        } else {
            CHECK(r.test_n_malware == 1250);
            CHECK(r.perf_measure == "real-life");
        }
        if (r.question == 2) CHECK(r.test_n_malware * (1 + r.test_benign_ratio) == 161250);
        if (r.question == 3) CHECK(r.train_n_malware == 102400);
    }
}

TEST_CASE("plans are ordered by question, level, algorithm, feature set and seed") {
    const auto p = plan(ExperimentConfig{});
    auto level = [](const RunSpec& r) { return r.question == 3 ? r.test_benign_ratio : r.train_n_malware; };
    for (std::size_t i = 1; i < p.runs.size(); ++i) {
        const auto& a = p.runs[i - 1];
        const auto& b = p.runs[i];
        const auto ka = std::make_tuple(a.question, level(a), a.algorithm, a.feature_set, a.seed);
        const auto kb = std::make_tuple(b.question, level(b), b.algorithm, b.feature_set, b.seed);
        REQUIRE(ka < kb);
    }
}

TEST_CASE("a small config yields the combinatorial count") {
    const auto cfg = ExperimentConfig::parse(
        "algorithms = DT, RF\nfeature_sets = parsed\nseeds = 1\ntrain_levels = 100, 200\nq3_ratios = 1, 2\n");
    CHECK(plan(cfg).runs.size() == 12);
}

TEST_CASE("invalid configs are rejected") {
    ExperimentConfig cfg;
    cfg.algorithms.clear();
    CHECK(kind_of([&] { plan(cfg); }) == ErrorKind::InvalidLevels);
    cfg = ExperimentConfig{};
    cfg.train_levels = {100, 300};
    CHECK(kind_of([&] { plan(cfg); }) == ErrorKind::InvalidLevels);
    cfg = ExperimentConfig{};
    cfg.q1_measures = {"f1"};
    CHECK(kind_of([&] { plan(cfg); }) == ErrorKind::InvalidLevels);
    CHECK_THROWS_AS(ExperimentConfig::parse("colour = blue\n"), Error);
    CHECK_THROWS_AS(ExperimentConfig::parse("seeds = 1, x\n"), Error);
}

TEST_CASE("config text round-trips and relative paths follow the file") {
    auto cfg = desk_config();
    cfg.target_fpr = 0.05;
    cfg.split.top_n = 7;
    const auto back = ExperimentConfig::parse(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());
    CHECK(back.split.top_n == 7);
    CHECK(back.q3_ratios == std::vector<std::size_t>{1, 2, 4});

    testing::TempDir dir;
    std::filesystem::create_directories(dir.path() / "sub");
    testing::write_lines(dir.file("sub/x.cfg"), {"# desk run", "fragments_dir = frags", "index = /abs/idx.csv"});
    const auto loaded = ExperimentConfig::load(dir.file("sub/x.cfg"));
    CHECK(std::filesystem::path(loaded.fragments_dir) == dir.path() / "sub" / "frags");
    CHECK(loaded.index == "/abs/idx.csv");
}

TEST_CASE("pool shortfalls are reported before any work") {
    auto cfg = desk_config();
    cfg.q3_train_malware = 100000;
    CHECK(kind_of([&] { check_pools(plan(cfg), corpus().pools); }) == ErrorKind::InsufficientPool);
}

TEST_CASE("execution records sizes, ratios and operating points") {
    const auto& c = corpus();
    testing::TempDir out;
    const auto p = plan(desk_config());
    const FragmentStore store(c.manifest);
    ExecuteOptions opts;
    opts.out_path = out.file("results.csv");
    opts.workers = 2;
    const auto report = execute(p, store, c.pools, quick(), opts);
    CHECK(report.failures.empty());
    CHECK(report.executed == p.runs.size());
    CHECK(report.observations.size() == p.runs.size());
    // All questions share models; the Q3 size is also the top level.
    CHECK(report.models_trained == 3 * 2 * 2 * 3);
    CHECK_FALSE(std::filesystem::exists(opts.out_path + ".partial"));

    const auto rows = read_observations(opts.out_path);
    REQUIRE(rows.size() == p.runs.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& o = rows[i];
        const auto& r = p.runs[i];
        CHECK(observation_key(o) == observation_key(r));
        CHECK(o.train_set_size == 2 * r.train_n_malware);
        REQUIRE(o.performance.has_value());
        CHECK(*o.performance >= 0.0);
        CHECK(*o.performance <= 1.0);
        if (o.question == 1) {
            CHECK(o.test_set_size == o.train_set_size);
            CHECK(o.test_set_ratio == "1:1");
            CHECK_FALSE(o.other_info.has_value());
        } else {
            REQUIRE(o.other_info.has_value());
            if (o.algorithm != "SVM") CHECK(*o.other_info >= 0.01);
        }
        if (o.question == 2) {
            CHECK(o.test_set_size == 180);
            CHECK(o.test_set_ratio == "1:8");
        }
    }

    // SVM real-life rows come from hard labels: FP over all test rows.
    const auto test = materialize(draw_dataset(c.pools, {Role::Test, 20, 8, FeatureSet::Parsed, 1}), store,
                                  FeatureSet::Parsed);
    const auto train_data = materialize(draw_dataset(c.pools, {Role::Train, 25, 1, FeatureSet::Parsed, 1}), store,
                                        FeatureSet::Parsed);
    const auto svm = train(Algorithm::SVM, train_data.x, train_data.y, 1, quick());
    const auto expected = hard_label_operating_point(test.y, svm.predict(test.x));
    bool found = false;
    for (const auto& o : rows) {
        if (o.question == 2 && o.algorithm == "SVM" && o.feature_set == "parsed" && o.seed == 1 &&
            o.train_set_size == 50) {
            CHECK(*o.performance == expected.recall);
            CHECK(*o.other_info == expected.achieved_fpr);
            found = true;
        }
    }
    CHECK(found);

    // Every Q3 ratio of one slice is scored by the same model.
    std::map<std::string, std::set<std::uint64_t>> q3_models;
    for (const auto& r : p.runs) {
        if (r.question == 3) q3_models[r.model_key()].insert(report.model_fingerprints.at(observation_key(r)));
    }
    CHECK(q3_models.size() == 3 * 2 * 2);
    for (const auto& [key, prints] : q3_models) CHECK(prints.size() == 1);

    SUBCASE("resume on a complete file does nothing") {
        const auto before = testing::slurp(opts.out_path);
        auto again = opts;
        again.resume = true;
        const auto second = execute(p, store, c.pools, quick(), again);
        CHECK(second.executed == 0);
        CHECK(second.skipped == p.runs.size());
        CHECK(second.models_trained == 0);
        CHECK(testing::slurp(opts.out_path) == before);
    }

    SUBCASE("a journal with a torn tail resumes to the same file") {
        const auto before = testing::slurp(opts.out_path);
        std::istringstream in(before);
        std::string line, journal;
        std::getline(in, line);
        for (int k = 0; k < 10 && std::getline(in, line); ++k) journal += line + "\n";
        journal += "2,DT,pars";
        std::filesystem::remove(opts.out_path);
        write_file_atomic(opts.out_path + ".partial", journal);
        auto again = opts;
        again.resume = true;
        const auto second = execute(p, store, c.pools, quick(), again);
        CHECK(second.skipped == 10);
        CHECK(second.executed == p.runs.size() - 10);
        CHECK(testing::slurp(opts.out_path) == before);
    }

    SUBCASE("worker count does not change the output") {
        auto serial = opts;
        serial.out_path = out.file("serial.csv");
        serial.workers = 1;
        execute(p, store, c.pools, quick(), serial);
        auto wide = opts;
        wide.out_path = out.file("wide.csv");
        wide.workers = 8;
        execute(p, store, c.pools, quick(), wide);
        CHECK(testing::slurp(serial.out_path) == testing::slurp(opts.out_path));
        CHECK(testing::slurp(wide.out_path) == testing::slurp(opts.out_path));
    }
}

TEST_CASE("failed runs are recorded without stopping the rest") {
    const auto& c = corpus();
    testing::TempDir out;
    auto cfg = desk_config();
    cfg.questions = {1};
    cfg.algorithms = {Algorithm::DT, Algorithm::SVM};
    const auto p = plan(cfg);
    auto params = quick();
    params.svm.c = 0;  // rejected by the SVM trainer
    ExecuteOptions opts;
    opts.out_path = out.file("r.csv");
    opts.workers = 2;
    const auto report = execute(p, FragmentStore(c.manifest), c.pools, params, opts);
    CHECK(report.failures.size() == p.runs.size() / 2);
    for (const auto& f : report.failures) {
        CHECK(f.run.algorithm == Algorithm::SVM);
        CHECK(f.message.find("svm.c") != std::string::npos);
    }
    CHECK(read_observations(opts.out_path).size() == p.runs.size() / 2);
    CHECK(std::filesystem::exists(opts.out_path + ".failures"));
    CHECK(std::filesystem::exists(opts.out_path + ".partial"));
}

TEST_CASE("run_experiment wires config, fragments and models") {
    const auto& c = corpus();
    testing::TempDir out;
    auto cfg = desk_config();
    cfg.questions = {3};
    cfg.algorithms = {Algorithm::DT};
    cfg.fragments_dir = c.manifest.dir;
    cfg.models_dir = out.file("models");
    ExecuteOptions opts;
    opts.out_path = out.file("r.csv");
    opts.workers = 1;
    const auto report = run_experiment(cfg, opts);
    CHECK(report.executed == 3 * 2 * 2);
    CHECK(report.models_trained == 4);
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(cfg.models_dir)) {
        const auto name = ModelName::parse(e.path().string());
        CHECK(name.algorithm == Algorithm::DT);
        CHECK(name.n_malware == 100);
        ++files;
    }
    CHECK(files == 4);
}
