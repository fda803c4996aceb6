// Exact CART (Gini) shared by the decision tree and the random forest.
//
// Each feature column is rank-encoded once; node split search then works on
// integer ranks, via a counting pass when the node's rank range is narrow
// and a sort otherwise. Thresholds are midpoints of adjacent distinct values
// present in the node.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "malbench/learn.hpp"

namespace malbench {

namespace {

struct RankedColumns {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint32_t> rank;           // column-major, rows per column
    std::vector<std::vector<double>> values;   // distinct sorted values per column

    std::uint32_t at(std::size_t col, std::size_t row) const { return rank[col * rows + row]; }
};

RankedColumns rank_columns(const Matrix& x) {
    RankedColumns rc;
    rc.rows = x.rows;
    rc.cols = x.cols;
    rc.rank.resize(x.rows * x.cols);
    rc.values.resize(x.cols);
    std::vector<std::pair<double, std::uint32_t>> col(x.rows);
    for (std::size_t j = 0; j < x.cols; ++j) {
        for (std::size_t i = 0; i < x.rows; ++i) col[i] = {x(i, j), static_cast<std::uint32_t>(i)};
        std::sort(col.begin(), col.end());
        auto& vals = rc.values[j];
        std::uint32_t r = 0;
        for (std::size_t k = 0; k < col.size(); ++k) {
            if (k > 0 && col[k].first != col[k - 1].first) ++r;
            if (k == 0 || col[k].first != col[k - 1].first) vals.push_back(col[k].first);
            rc.rank[j * x.rows + col[k].second] = r;
        }
    }
    return rc;
}

struct SplitChoice {
    bool found = false;
    double score = -1.0;
    std::size_t feature = 0;
    std::uint32_t rank = 0;  // rows with rank <= this go left
    double threshold = 0.0;
};

class TreeBuilder {
public:
    TreeBuilder(const RankedColumns& data, std::span<const int> y, const TreeParams& params)
        : data_(data), y_(y), params_(params) {
        std::size_t max_distinct = 1;
        for (const auto& v : data.values) max_distinct = std::max(max_distinct, v.size());
        w0_.assign(max_distinct, 0.0);
        w1_.assign(max_distinct, 0.0);
        features_.resize(data.cols);
    }

    /// rows/weights: distinct row ids with positive multiplicity.
    /// max_features == 0 evaluates every feature in index order.
    Tree build(std::vector<std::uint32_t> rows, std::vector<double> weights, std::size_t max_features,
               SplitMix64* rng) {
        rows_ = std::move(rows);
        weights_.assign(data_.rows, 0.0);
        for (std::size_t k = 0; k < rows_.size(); ++k) weights_[rows_[k]] = weights[k];
        Tree tree;
        struct Pending {
            std::size_t begin, end, depth;
            std::int32_t node;
        };
        tree.nodes.emplace_back();
        std::vector<Pending> stack{{0, rows_.size(), 0, 0}};
        while (!stack.empty()) {
            const Pending p = stack.back();
            stack.pop_back();
            double c0 = 0, c1 = 0;
            for (std::size_t k = p.begin; k < p.end; ++k) {
                const std::uint32_t r = rows_[k];
                (y_[r] == 1 ? c1 : c0) += weights_[r];
            }
            tree.nodes[static_cast<std::size_t>(p.node)].value = c1 / (c0 + c1);

            const std::size_t count = p.end - p.begin;
            const bool pure = c0 == 0 || c1 == 0;
            const bool depth_capped = params_.max_depth != 0 && p.depth >= params_.max_depth;
            if (pure || depth_capped || count < params_.min_samples_split) continue;

            const SplitChoice split = find_split(p.begin, p.end, c0, c1, max_features, rng);
            if (!split.found) continue;

            const auto mid_it = std::stable_partition(
                rows_.begin() + static_cast<std::ptrdiff_t>(p.begin), rows_.begin() + static_cast<std::ptrdiff_t>(p.end),
                [&](std::uint32_t r) { return data_.at(split.feature, r) <= split.rank; });
            const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());

            const auto left = static_cast<std::int32_t>(tree.nodes.size());
            tree.nodes.emplace_back();
            const auto right = static_cast<std::int32_t>(tree.nodes.size());
            tree.nodes.emplace_back();
            auto& node = tree.nodes[static_cast<std::size_t>(p.node)];
            node.feature = static_cast<std::int32_t>(split.feature);
            node.threshold = split.threshold;
            node.left = left;
            node.right = right;
            // Right pushed first so the left subtree is expanded first.
            stack.push_back({mid, p.end, p.depth + 1, right});
            stack.push_back({p.begin, mid, p.depth + 1, left});
        }
        return tree;
    }

private:
    SplitChoice find_split(std::size_t begin, std::size_t end, double c0, double c1, std::size_t max_features,
                           SplitMix64* rng) {
        SplitChoice best;
        const std::size_t d = data_.cols;
        if (max_features == 0) {
            for (std::size_t f = 0; f < d; ++f) evaluate_feature(f, begin, end, c0, c1, best);
            return best;
        }
        std::iota(features_.begin(), features_.end(), std::size_t{0});
        std::size_t informative = 0;
        for (std::size_t k = 0; k < d && informative < max_features; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng->bounded(d - k));
            std::swap(features_[k], features_[j]);
            if (evaluate_feature(features_[k], begin, end, c0, c1, best)) ++informative;
        }
        return best;
    }

    // Returns false when the feature is constant over the node.
    bool evaluate_feature(std::size_t f, std::size_t begin, std::size_t end, double c0, double c1,
                          SplitChoice& best) {
        std::uint32_t lo = data_.at(f, rows_[begin]);
        std::uint32_t hi = lo;
        for (std::size_t k = begin + 1; k < end; ++k) {
            const std::uint32_t r = data_.at(f, rows_[k]);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        if (lo == hi) return false;

        const double total = c0 + c1;
        const auto& values = data_.values[f];
        double l0 = 0, l1 = 0;
        std::size_t left_rows = 0;
        const std::size_t count = end - begin;

        auto consider = [&](std::uint32_t left_rank, std::uint32_t right_rank) {
            const double nl = l0 + l1;
            const double r0 = c0 - l0, r1 = c1 - l1;
            const double nr = total - nl;
            if (left_rows < params_.min_samples_leaf || count - left_rows < params_.min_samples_leaf) return;
            const double score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr;
            const bool better = !best.found || score > best.score || (score == best.score && f < best.feature);
            if (!better) return;
            best.found = true;
            best.score = score;
            best.feature = f;
            best.rank = left_rank;
            double threshold = 0.5 * (values[left_rank] + values[right_rank]);
            if (threshold == values[right_rank]) threshold = values[left_rank];
            best.threshold = threshold;
        };

        const std::size_t range = static_cast<std::size_t>(hi - lo) + 1;
        if (range <= 4 * count + 64) {
            std::fill_n(w0_.begin(), range, 0.0);
            std::fill_n(w1_.begin(), range, 0.0);
            counts_.assign(range, 0);
            for (std::size_t k = begin; k < end; ++k) {
                const std::uint32_t row = rows_[k];
                const std::size_t slot = data_.at(f, row) - lo;
                (y_[row] == 1 ? w1_[slot] : w0_[slot]) += weights_[row];
                ++counts_[slot];
            }
            std::size_t prev = range;
            for (std::size_t s = 0; s < range; ++s) {
                if (counts_[s] == 0) continue;
                if (prev != range) {
                    consider(static_cast<std::uint32_t>(prev + lo), static_cast<std::uint32_t>(s + lo));
                }
                l0 += w0_[s];
                l1 += w1_[s];
                left_rows += counts_[s];
                prev = s;
            }
        } else {
            sorted_.clear();
            for (std::size_t k = begin; k < end; ++k) sorted_.push_back({data_.at(f, rows_[k]), rows_[k]});
            std::sort(sorted_.begin(), sorted_.end());
            for (std::size_t k = 0; k < sorted_.size(); ++k) {
                if (k > 0 && sorted_[k].first != sorted_[k - 1].first) {
                    consider(sorted_[k - 1].first, sorted_[k].first);
                }
                const std::uint32_t row = sorted_[k].second;
                (y_[row] == 1 ? l1 : l0) += weights_[row];
                ++left_rows;
            }
        }
        return true;
    }

    const RankedColumns& data_;
    std::span<const int> y_;
    TreeParams params_;
    std::vector<std::uint32_t> rows_;
    std::vector<double> weights_;
    std::vector<double> w0_, w1_;
    std::vector<std::size_t> counts_;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> sorted_;
    std::vector<std::size_t> features_;
};

}  // namespace

double Tree::evaluate(std::span<const double> row) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
}

std::size_t Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (nodes[i].feature >= 0) {
            stack.push_back({static_cast<std::size_t>(nodes[i].left), d + 1});
            stack.push_back({static_cast<std::size_t>(nodes[i].right), d + 1});
        }
    }
    return deepest;
}

Tree fit_decision_tree(const Matrix& x, std::span<const int> y, const TreeParams& params) {
    const RankedColumns ranked = rank_columns(x);
    TreeBuilder builder(ranked, y, params);
    std::vector<std::uint32_t> rows(x.rows);
    std::iota(rows.begin(), rows.end(), 0u);
    return builder.build(std::move(rows), std::vector<double>(x.rows, 1.0), 0, nullptr);
}

std::vector<Tree> fit_random_forest(const Matrix& x, std::span<const int> y, std::uint64_t seed,
                                    const TreeParams& tree, const ForestParams& forest) {
    const RankedColumns ranked = rank_columns(x);
    std::size_t max_features = forest.max_features;
    if (max_features == 0) {
        max_features = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(x.cols))));
    }
    max_features = std::clamp<std::size_t>(max_features, 1, x.cols);

    std::vector<Tree> trees(forest.n_estimators);
    parallel_for(forest.n_estimators, forest.threads, [&](std::size_t t) {
        SplitMix64 rng(derive_seed(seed, "rf-tree", t));
        std::vector<std::uint32_t> rows;
        std::vector<double> weights;
        if (forest.bootstrap) {
            std::vector<std::uint32_t> multiplicity(x.rows, 0);
            for (std::size_t k = 0; k < x.rows; ++k) ++multiplicity[rng.bounded(x.rows)];
            for (std::size_t r = 0; r < x.rows; ++r) {
                if (multiplicity[r] == 0) continue;
                rows.push_back(static_cast<std::uint32_t>(r));
                weights.push_back(multiplicity[r]);
            }
        } else {
            rows.resize(x.rows);
            std::iota(rows.begin(), rows.end(), 0u);
            weights.assign(x.rows, 1.0);
        }
        TreeBuilder builder(ranked, y, tree);
        trees[t] = builder.build(std::move(rows), std::move(weights), max_features, &rng);
    });
    return trees;
}

}  // namespace malbench
