#pragma once

// The experimental grid: configuration, run planning and resumable execution.

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "malbench/analyze.hpp"
#include "malbench/learn.hpp"
#include "malbench/sample.hpp"

namespace malbench {

/// Parsed from "key = value" lines; lists are comma-separated. Relative paths
/// in a loaded file resolve against the file's directory.
struct ExperimentConfig {
    std::string fragments_dir;
    std::string index;       // metadata index CSV; rebuilt from fragments when empty
    std::string models_dir;  // trained models are saved here when set
    std::string hyperparams; // optional hyperparameter override file

    std::vector<int> questions{1, 2, 3};
    std::vector<std::size_t> train_levels{100, 200, 400, 800, 1600, 3200, 6400, 12800, 25600, 51200, 102400};
    std::size_t q2_test_malware = 1250;
    std::size_t q2_ratio = 128;
    std::size_t q3_train_malware = 102400;
    std::size_t q3_test_malware = 1250;
    std::vector<std::size_t> q3_ratios{1, 2, 4, 8, 16, 32, 64, 128};
    std::vector<std::string> q1_measures{"accuracy"};
    std::vector<std::string> q2_measures{"real-life"};
    std::vector<std::string> q3_measures{"real-life"};

    std::vector<std::uint64_t> seeds{1337, 1338, 1339};
    std::vector<Algorithm> algorithms{Algorithm::DT, Algorithm::RF, Algorithm::LGBM, Algorithm::SVM};
    std::vector<FeatureSet> feature_sets{FeatureSet::Parsed, FeatureSet::FormatAgnostic, FeatureSet::Combined};
    double target_fpr = 0.01;
    SplitConfig split;

    static ExperimentConfig parse(std::string_view text);
    static ExperimentConfig load(const std::string& path);
    std::string to_text() const;

    /// Throws InvalidLevels.
    void validate() const;
};

struct RunSpec {
    int question = 1;
    std::size_t train_n_malware = 0;
    std::size_t test_n_malware = 0;
    std::size_t test_benign_ratio = 1;
    Algorithm algorithm = Algorithm::DT;
    FeatureSet feature_set = FeatureSet::Combined;
    std::string perf_measure;
    std::uint64_t seed = 0;

    DatasetSpec train_spec() const;
    DatasetSpec test_spec() const;
    std::string model_key() const;

    bool operator==(const RunSpec&) const = default;
};

/// (question, algorithm, feature_set, train_set_size, test_set_ratio, perf_measure, seed)
std::string observation_key(const Observation& obs);
std::string observation_key(const RunSpec& run);

struct ExperimentPlan {
    std::vector<RunSpec> runs;
};

/// Ordered by question, level, algorithm, feature set, seed, then measure.
ExperimentPlan plan(const ExperimentConfig& config);

struct ExecuteOptions {
    std::string out_path;
    bool resume = false;
    unsigned workers = 0;  // 0: default_workers()
    std::string models_dir;
    double target_fpr = 0.01;
    std::ostream* log = nullptr;
};

struct RunFailure {
    RunSpec run;
    std::string message;
};

struct ExecuteReport {
    std::size_t executed = 0;
    std::size_t skipped = 0;  // already present when resuming
    std::size_t models_trained = 0;
    std::vector<RunFailure> failures;
    std::map<std::string, std::uint64_t> model_fingerprints;  // observation key -> model
    std::vector<Observation> observations;                    // plan order
};

/// Throws InsufficientPool if any dataset of the plan cannot be drawn.
void check_pools(const ExperimentPlan& plan, const Pools& pools);

/// Runs the plan and writes the results CSV in plan order. Completed
/// observations are journaled to out_path + ".partial" as they finish, and
/// resume skips any run already present in the results or the journal.
ExecuteReport execute(const ExperimentPlan& plan, const FragmentStore& store, const Pools& pools,
                      const Hyperparams& params, const ExecuteOptions& options);

/// Loads fragments, index and pools named by the config, then executes.
ExecuteReport run_experiment(const ExperimentConfig& config, ExecuteOptions options);

}  // namespace malbench
