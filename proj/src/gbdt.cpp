// Gradient-boosted trees with logistic loss: histogram binning, leaf-wise
// growth and histogram subtraction for the larger child.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "malbench/learn.hpp"

namespace malbench {

namespace {

struct BinnedFeature {
    std::vector<double> upper;  // split threshold after each bin except the last
    std::size_t bins = 1;
    std::size_t offset = 0;     // into the flat histogram
};

struct BinnedData {
    std::size_t rows = 0;
    std::vector<BinnedFeature> features;
    std::vector<std::uint8_t> bin;     // column-major
    std::vector<std::size_t> active;   // features with more than one bin
    std::size_t total_bins = 0;

    std::uint8_t at(std::size_t f, std::size_t row) const { return bin[f * rows + row]; }
};

// Equal-frequency greedy binning over distinct values; every bin holds at
// least min_data_in_bin rows. Bin boundaries sit at midpoints between the last
// value of one bin and the first of the next.
BinnedFeature make_bins(std::vector<double> column, std::size_t max_bin, std::size_t min_data_in_bin) {
    std::sort(column.begin(), column.end());
    std::vector<double> distinct;
    std::vector<std::size_t> counts;
    for (double v : column) {
        if (distinct.empty() || v != distinct.back()) {
            distinct.push_back(v);
            counts.push_back(0);
        }
        ++counts.back();
    }
    BinnedFeature bf;
    auto boundary = [&](std::size_t k) {
        double mid = 0.5 * (distinct[k] + distinct[k + 1]);
        if (mid == distinct[k + 1]) mid = distinct[k];
        return mid;
    };
    double target = static_cast<double>(std::max<std::size_t>(min_data_in_bin, 1));
    if (distinct.size() > max_bin) {
        target = std::max(target, static_cast<double>(column.size()) / static_cast<double>(max_bin));
    }
    std::size_t acc = 0;
    std::size_t remaining = column.size();
    for (std::size_t k = 0; k + 1 < distinct.size(); ++k) {
        acc += counts[k];
        remaining -= counts[k];
        if (bf.upper.size() + 1 >= max_bin) break;
        if (static_cast<double>(acc) >= target && remaining >= min_data_in_bin) {
            bf.upper.push_back(boundary(k));
            acc = 0;
        }
    }
    bf.bins = bf.upper.size() + 1;
    return bf;
}

BinnedData bin_matrix(const Matrix& x, std::size_t max_bin, std::size_t min_data_in_bin) {
    BinnedData b;
    b.rows = x.rows;
    b.features.resize(x.cols);
    b.bin.resize(x.rows * x.cols);
    std::vector<double> column(x.rows);
    for (std::size_t j = 0; j < x.cols; ++j) {
        for (std::size_t i = 0; i < x.rows; ++i) column[i] = x(i, j);
        auto& bf = b.features[j];
        bf = make_bins(column, max_bin, min_data_in_bin);
        for (std::size_t i = 0; i < x.rows; ++i) {
            const auto it = std::lower_bound(bf.upper.begin(), bf.upper.end(), x(i, j));
            b.bin[j * x.rows + i] = static_cast<std::uint8_t>(it - bf.upper.begin());
        }
        if (bf.bins > 1) {
            bf.offset = b.total_bins;
            b.total_bins += bf.bins;
            b.active.push_back(j);
        }
    }
    return b;
}

struct HistBin {
    double g = 0;
    double h = 0;
    std::uint32_t n = 0;
};

struct LeafSplit {
    bool valid = false;
    double gain = 0;
    std::size_t feature = 0;
    std::size_t bin = 0;  // bins <= this go left
};

struct Leaf {
    std::size_t begin = 0, end = 0;
    double g = 0, h = 0;
    std::int32_t node = 0;
    std::vector<HistBin> hist;
    LeafSplit split;
};

class BoostedTreeGrower {
public:
    BoostedTreeGrower(const BinnedData& data, const BoostParams& params) : data_(data), params_(params) {}

    Tree grow(std::span<const double> grad, std::span<const double> hess) {
        grad_ = grad;
        hess_ = hess;
        order_.resize(data_.rows);
        std::iota(order_.begin(), order_.end(), 0u);

        Tree tree;
        tree.nodes.emplace_back();
        std::vector<Leaf> leaves(1);
        Leaf& root = leaves[0];
        root.begin = 0;
        root.end = data_.rows;
        for (std::size_t i = 0; i < data_.rows; ++i) {
            root.g += grad[i];
            root.h += hess[i];
        }
        build_histogram(root);
        root.split = best_split(root);

        while (leaves.size() < params_.num_leaves) {
            std::size_t pick = leaves.size();
            for (std::size_t l = 0; l < leaves.size(); ++l) {
                if (!leaves[l].split.valid) continue;
                if (pick == leaves.size() || leaves[l].split.gain > leaves[pick].split.gain) pick = l;
            }
            if (pick == leaves.size()) break;
            split_leaf(tree, leaves, pick);
        }

        for (auto& leaf : leaves) {
            tree.nodes[static_cast<std::size_t>(leaf.node)].value =
                -leaf.g / (leaf.h + params_.lambda_l2) * params_.learning_rate;
            spare_.push_back(std::move(leaf.hist));
        }
        return tree;
    }

private:
    // Histogram buffers are recycled across leaves and rounds; fresh
    // multi-megabyte allocations otherwise dominate small trainings.
    void build_histogram(Leaf& leaf) {
        if (!spare_.empty()) {
            leaf.hist = std::move(spare_.back());
            spare_.pop_back();
        }
        leaf.hist.assign(data_.total_bins, HistBin{});
        for (std::size_t f : data_.active) {
            HistBin* h = leaf.hist.data() + data_.features[f].offset;
            const std::uint8_t* bins = data_.bin.data() + f * data_.rows;
            for (std::size_t k = leaf.begin; k < leaf.end; ++k) {
                const std::uint32_t row = order_[k];
                HistBin& b = h[bins[row]];
                b.g += grad_[row];
                b.h += hess_[row];
                ++b.n;
            }
        }
    }

    LeafSplit best_split(const Leaf& leaf) const {
        LeafSplit best;
        const std::size_t count = leaf.end - leaf.begin;
        if (count < 2 * params_.min_data_in_leaf) return best;
        const double lambda = params_.lambda_l2;
        const double parent = leaf.g * leaf.g / (leaf.h + lambda);
        for (std::size_t f : data_.active) {
            const auto& bf = data_.features[f];
            const HistBin* h = leaf.hist.data() + bf.offset;
            double gl = 0, hl = 0;
            std::size_t nl = 0;
            for (std::size_t b = 0; b + 1 < bf.bins; ++b) {
                gl += h[b].g;
                hl += h[b].h;
                nl += h[b].n;
                const std::size_t nr = count - nl;
                if (nl < params_.min_data_in_leaf) continue;
                if (nr < params_.min_data_in_leaf) break;
                const double hr = leaf.h - hl;
                if (hl < params_.min_sum_hessian || hr < params_.min_sum_hessian) continue;
                const double gr = leaf.g - gl;
                const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if (gain > 0 && (!best.valid || gain > best.gain)) {
                    best.valid = true;
                    best.gain = gain;
                    best.feature = f;
                    best.bin = b;
                }
            }
        }
        return best;
    }

    void split_leaf(Tree& tree, std::vector<Leaf>& leaves, std::size_t index) {
        Leaf parent = std::move(leaves[index]);
        const LeafSplit split = parent.split;
        const std::uint8_t* bins = data_.bin.data() + split.feature * data_.rows;
        const auto mid_it = std::stable_partition(order_.begin() + static_cast<std::ptrdiff_t>(parent.begin),
                                                  order_.begin() + static_cast<std::ptrdiff_t>(parent.end),
                                                  [&](std::uint32_t r) { return bins[r] <= split.bin; });
        const auto mid = static_cast<std::size_t>(mid_it - order_.begin());

        Leaf left, right;
        left.begin = parent.begin;
        left.end = mid;
        right.begin = mid;
        right.end = parent.end;
        for (std::size_t k = left.begin; k < left.end; ++k) {
            left.g += grad_[order_[k]];
            left.h += hess_[order_[k]];
        }
        right.g = parent.g - left.g;
        right.h = parent.h - left.h;

        Leaf& small = (left.end - left.begin) <= (right.end - right.begin) ? left : right;
        Leaf& large = &small == &left ? right : left;
        build_histogram(small);
        large.hist = std::move(parent.hist);
        for (std::size_t k = 0; k < large.hist.size(); ++k) {
            large.hist[k].g -= small.hist[k].g;
            large.hist[k].h -= small.hist[k].h;
            large.hist[k].n -= small.hist[k].n;
        }

        left.node = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        right.node = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        auto& node = tree.nodes[static_cast<std::size_t>(parent.node)];
        node.feature = static_cast<std::int32_t>(split.feature);
        node.threshold = data_.features[split.feature].upper[split.bin];
        node.left = left.node;
        node.right = right.node;

        left.split = best_split(left);
        right.split = best_split(right);
        leaves[index] = std::move(left);
        leaves.push_back(std::move(right));
    }

    const BinnedData& data_;
    BoostParams params_;
    std::span<const double> grad_;
    std::span<const double> hess_;
    std::vector<std::uint32_t> order_;
    std::vector<std::vector<HistBin>> spare_;
};

}  // namespace

double sigmoid(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

void fit_boosted_trees(const Matrix& x, std::span<const int> y, const BoostParams& params, TrainedModel& model) {
    if (params.max_bin < 2 || params.max_bin > 256) {
        throw Error(ErrorKind::InvalidArgument, "max_bin must lie in [2, 256]");
    }
    if (params.num_leaves < 2) throw Error(ErrorKind::InvalidArgument, "num_leaves must be at least 2");
    const BinnedData data = bin_matrix(x, params.max_bin, params.min_data_in_bin);
    const std::size_t n = x.rows;

    double positives = 0;
    for (int label : y) positives += label;
    const double p = positives / static_cast<double>(n);
    model.init_score = std::log(p / (1.0 - p));

    std::vector<double> margin(n, model.init_score);
    std::vector<double> grad(n), hess(n);
    BoostedTreeGrower grower(data, params);
    model.trees.clear();
    for (std::size_t round = 0; round < params.num_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double prob = sigmoid(margin[i]);
            grad[i] = prob - y[i];
            hess[i] = prob * (1.0 - prob);
        }
        Tree tree = grower.grow(grad, hess);
        for (std::size_t i = 0; i < n; ++i) margin[i] += tree.evaluate(x.row(i));
        model.trees.push_back(std::move(tree));
    }
}

}  // namespace malbench
