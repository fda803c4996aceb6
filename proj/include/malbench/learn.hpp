#pragma once

// Decision tree, random forest, gradient-boosted trees and linear SVM.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "malbench/common.hpp"
#include "malbench/matrix.hpp"
#include "malbench/vectorize.hpp"

namespace malbench {

enum class Algorithm { DT, RF, LGBM, SVM };

std::string_view to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view text);

struct TreeParams {
    std::size_t max_depth = 0;  // 0 = unbounded
    std::size_t min_samples_split = 2;
    std::size_t min_samples_leaf = 1;
};

struct ForestParams {
    std::size_t n_estimators = 100;
    std::size_t max_features = 0;  // 0 = floor(sqrt(width)), at least 1
    bool bootstrap = true;
    unsigned threads = 1;  // trees built concurrently; results do not depend on it
};

struct BoostParams {
    std::size_t num_rounds = 100;
    double learning_rate = 0.1;
    std::size_t num_leaves = 31;
    std::size_t max_bin = 255;
    std::size_t min_data_in_bin = 3;
    std::size_t min_data_in_leaf = 20;
    double min_sum_hessian = 1e-3;
    double lambda_l2 = 0.0;
};

struct SvmParams {
    double c = 1.0;
    std::size_t max_iter = 1000;  // epochs of dual coordinate descent
    double tol = 1e-4;            // relative primal objective change
};

struct Hyperparams {
    TreeParams tree;
    ForestParams forest;
    BoostParams boost;
    SvmParams svm;

    /// "key = value" lines, e.g. "rf.n_estimators = 50", "svm.max_iter = 200".
    static Hyperparams parse(std::string_view text);
    static Hyperparams load(const std::string& path);
    std::string to_text() const;
};

/// Binary tree; internal nodes send x[feature] <= threshold to the left child.
struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;  // class-1 fraction (DT/RF) or leaf output (LGBM)

    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double evaluate(std::span<const double> row) const;
    std::size_t depth() const;

    bool operator==(const Tree&) const = default;
};

class TrainedModel {
public:
    Algorithm algorithm = Algorithm::DT;
    Hyperparams params;
    std::uint64_t seed = 0;
    std::size_t width = 0;
    bool converged = true;
    std::size_t iterations = 0;

    std::vector<Tree> trees;   // DT: one, RF: n_estimators, LGBM: one per round
    double init_score = 0.0;   // LGBM
    std::vector<double> mean;  // SVM standardization
    std::vector<double> scale;
    std::vector<double> weights;
    double bias = 0.0;

    /// Hard labels in {0,1}.
    std::vector<int> predict(const Matrix& x) const;

    /// Class-1 scores. Throws Unsupported for SVM.
    std::vector<double> score(const Matrix& x) const;

    /// LGBM: summed raw margin; SVM: decision value. Throws Unsupported otherwise.
    std::vector<double> decision_function(const Matrix& x) const;

    bool supports_scores() const { return algorithm != Algorithm::SVM; }

private:
    void check_width(const Matrix& x) const;
};

/// Deterministic for fixed inputs and seed. Throws DegenerateLabels when y
/// holds a single class and NonFiniteFeature on NaN/inf input.
TrainedModel train(Algorithm algorithm, const Matrix& x, std::span<const int> y, std::uint64_t seed,
                   const Hyperparams& params = {});

// Individual trainers, exposed for tests.
Tree fit_decision_tree(const Matrix& x, std::span<const int> y, const TreeParams& params);
std::vector<Tree> fit_random_forest(const Matrix& x, std::span<const int> y, std::uint64_t seed,
                                    const TreeParams& tree, const ForestParams& forest);
void fit_boosted_trees(const Matrix& x, std::span<const int> y, const BoostParams& params, TrainedModel& model);
void fit_linear_svm(const Matrix& x, std::span<const int> y, std::uint64_t seed, const SvmParams& params,
                    TrainedModel& model);

double sigmoid(double margin);

std::string serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(std::string_view text);
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);
std::uint64_t model_fingerprint(const TrainedModel& model);

/// {alg}_{n}_malware_x{ratio}_benign_{featureset}_s{seed}
struct ModelName {
    Algorithm algorithm = Algorithm::DT;
    std::size_t n_malware = 0;
    std::size_t benign_ratio = 1;
    FeatureSet feature_set = FeatureSet::Combined;
    std::uint64_t seed = 0;

    std::string str() const;
    /// Accepts a bare name, a file name with extension, or a path.
    static ModelName parse(std::string_view text);

    bool operator==(const ModelName&) const = default;
};

}  // namespace malbench
