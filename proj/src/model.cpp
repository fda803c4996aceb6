#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

#include "malbench/learn.hpp"

namespace malbench {

std::string_view to_string(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::DT: return "DT";
        case Algorithm::RF: return "RF";
        case Algorithm::LGBM: return "LGBM";
        case Algorithm::SVM: return "SVM";
    }
    return "DT";
}

Algorithm parse_algorithm(std::string_view text) {
    if (text == "DT") return Algorithm::DT;
    if (text == "RF") return Algorithm::RF;
    if (text == "LGBM") return Algorithm::LGBM;
    if (text == "SVM") return Algorithm::SVM;
    throw Error(ErrorKind::InvalidArgument, "unknown algorithm '" + std::string(text) + "'");
}

namespace {

using Setter = std::function<void(Hyperparams&, std::string_view)>;
using Getter = std::function<std::string(const Hyperparams&)>;

std::size_t as_size(std::string_view v) {
    const long long n = parse_integer(v);
    if (n < 0) throw Error(ErrorKind::InvalidArgument, "expected a non-negative integer, got " + std::string(v));
    return static_cast<std::size_t>(n);
}

const std::vector<std::tuple<std::string, Setter, Getter>>& hyperparam_fields() {
    static const std::vector<std::tuple<std::string, Setter, Getter>> fields = {
        {"dt.max_depth", [](Hyperparams& h, std::string_view v) { h.tree.max_depth = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.tree.max_depth); }},
        {"dt.min_samples_split", [](Hyperparams& h, std::string_view v) { h.tree.min_samples_split = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.tree.min_samples_split); }},
        {"dt.min_samples_leaf", [](Hyperparams& h, std::string_view v) { h.tree.min_samples_leaf = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.tree.min_samples_leaf); }},
        {"rf.n_estimators", [](Hyperparams& h, std::string_view v) { h.forest.n_estimators = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.forest.n_estimators); }},
        {"rf.max_features", [](Hyperparams& h, std::string_view v) { h.forest.max_features = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.forest.max_features); }},
        {"rf.bootstrap", [](Hyperparams& h, std::string_view v) { h.forest.bootstrap = as_size(v) != 0; },
         [](const Hyperparams& h) { return std::string(h.forest.bootstrap ? "1" : "0"); }},
        {"lgbm.num_rounds", [](Hyperparams& h, std::string_view v) { h.boost.num_rounds = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.boost.num_rounds); }},
        {"lgbm.learning_rate", [](Hyperparams& h, std::string_view v) { h.boost.learning_rate = parse_number(v); },
         [](const Hyperparams& h) { return format_number(h.boost.learning_rate); }},
        {"lgbm.num_leaves", [](Hyperparams& h, std::string_view v) { h.boost.num_leaves = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.boost.num_leaves); }},
        {"lgbm.max_bin", [](Hyperparams& h, std::string_view v) { h.boost.max_bin = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.boost.max_bin); }},
        {"lgbm.min_data_in_bin", [](Hyperparams& h, std::string_view v) { h.boost.min_data_in_bin = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.boost.min_data_in_bin); }},
        {"lgbm.min_data_in_leaf", [](Hyperparams& h, std::string_view v) { h.boost.min_data_in_leaf = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.boost.min_data_in_leaf); }},
        {"lgbm.min_sum_hessian", [](Hyperparams& h, std::string_view v) { h.boost.min_sum_hessian = parse_number(v); },
         [](const Hyperparams& h) { return format_number(h.boost.min_sum_hessian); }},
        {"lgbm.lambda_l2", [](Hyperparams& h, std::string_view v) { h.boost.lambda_l2 = parse_number(v); },
         [](const Hyperparams& h) { return format_number(h.boost.lambda_l2); }},
        {"svm.c", [](Hyperparams& h, std::string_view v) { h.svm.c = parse_number(v); },
         [](const Hyperparams& h) { return format_number(h.svm.c); }},
        {"svm.max_iter", [](Hyperparams& h, std::string_view v) { h.svm.max_iter = as_size(v); },
         [](const Hyperparams& h) { return std::to_string(h.svm.max_iter); }},
        {"svm.tol", [](Hyperparams& h, std::string_view v) { h.svm.tol = parse_number(v); },
         [](const Hyperparams& h) { return format_number(h.svm.tol); }},
    };
    return fields;
}

}  // namespace

Hyperparams Hyperparams::parse(std::string_view text) {
    Hyperparams h;
    std::size_t line_number = 0;
    for (std::string_view raw : split(text, '\n')) {
        ++line_number;
        std::string_view line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::InvalidArgument, "hyperparams line " + std::to_string(line_number) + ": expected key = value");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        bool known = false;
        for (const auto& [name, set, get] : hyperparam_fields()) {
            if (name == key) {
                set(h, value);
                known = true;
            }
        }
        if (!known) throw Error(ErrorKind::InvalidArgument, "unknown hyperparameter '" + key + "'");
    }
    return h;
}

Hyperparams Hyperparams::load(const std::string& path) { return parse(read_file(path)); }

std::string Hyperparams::to_text() const {
    std::string out;
    for (const auto& [name, set, get] : hyperparam_fields()) out += name + " = " + get(*this) + "\n";
    return out;
}

TrainedModel train(Algorithm algorithm, const Matrix& x, std::span<const int> y, std::uint64_t seed,
                   const Hyperparams& params) {
    if (x.rows == 0 || x.cols == 0) throw Error(ErrorKind::Empty, "training matrix is empty");
    if (y.size() != x.rows) throw Error(ErrorKind::LengthMismatch, "labels do not match matrix rows");
    bool has0 = false, has1 = false;
    for (int label : y) {
        if (label == 1) has1 = true;
        else if (label == 0) has0 = true;
        else throw Error(ErrorKind::InvalidArgument, "labels must be 0 or 1");
    }
    if (!has0 || !has1) throw Error(ErrorKind::DegenerateLabels, "training labels contain a single class");
    for (std::size_t k = 0; k < x.data.size(); ++k) {
        if (!std::isfinite(x.data[k])) {
            throw Error(ErrorKind::NonFiniteFeature, "non-finite value at row " + std::to_string(k / x.cols) +
                                                         ", column " + std::to_string(k % x.cols));
        }
    }

    TrainedModel model;
    model.algorithm = algorithm;
    model.params = params;
    model.seed = seed;
    model.width = x.cols;
    switch (algorithm) {
        case Algorithm::DT:
            model.trees.push_back(fit_decision_tree(x, y, params.tree));
            break;
        case Algorithm::RF:
            model.trees = fit_random_forest(x, y, seed, params.tree, params.forest);
            break;
        case Algorithm::LGBM:
            fit_boosted_trees(x, y, params.boost, model);
            break;
        case Algorithm::SVM:
            fit_linear_svm(x, y, seed, params.svm, model);
            break;
    }
    return model;
}

void TrainedModel::check_width(const Matrix& x) const {
    if (x.cols != width) {
        throw Error(ErrorKind::WidthMismatch,
                    "model expects " + std::to_string(width) + " columns, got " + std::to_string(x.cols));
    }
}

std::vector<double> TrainedModel::decision_function(const Matrix& x) const {
    check_width(x);
    std::vector<double> out(x.rows);
    if (algorithm == Algorithm::LGBM) {
        for (std::size_t i = 0; i < x.rows; ++i) {
            double m = init_score;
            for (const auto& t : trees) m += t.evaluate(x.row(i));
            out[i] = m;
        }
    } else if (algorithm == Algorithm::SVM) {
        for (std::size_t i = 0; i < x.rows; ++i) {
            const auto row = x.row(i);
            double m = bias;
            for (std::size_t j = 0; j < width; ++j) m += weights[j] * (row[j] - mean[j]) / scale[j];
            out[i] = m;
        }
    } else {
        throw Error(ErrorKind::Unsupported, std::string(to_string(algorithm)) + " has no raw margin");
    }
    return out;
}

std::vector<double> TrainedModel::score(const Matrix& x) const {
    check_width(x);
    std::vector<double> out(x.rows);
    switch (algorithm) {
        case Algorithm::DT:
            for (std::size_t i = 0; i < x.rows; ++i) out[i] = trees.front().evaluate(x.row(i));
            break;
        case Algorithm::RF:
            for (std::size_t i = 0; i < x.rows; ++i) {
                double sum = 0;
                for (const auto& t : trees) sum += t.evaluate(x.row(i));
                out[i] = sum / static_cast<double>(trees.size());
            }
            break;
        case Algorithm::LGBM:
            out = decision_function(x);
            for (double& v : out) v = sigmoid(v);
            break;
        case Algorithm::SVM:
            throw Error(ErrorKind::Unsupported, "SVM models produce hard labels only");
    }
    return out;
}

std::vector<int> TrainedModel::predict(const Matrix& x) const {
    check_width(x);
    std::vector<int> out(x.rows);
    if (algorithm == Algorithm::SVM || algorithm == Algorithm::LGBM) {
        const auto margin = decision_function(x);
        for (std::size_t i = 0; i < x.rows; ++i) out[i] = margin[i] > 0.0 ? 1 : 0;
    } else {
        const auto s = score(x);
        for (std::size_t i = 0; i < x.rows; ++i) out[i] = s[i] > 0.5 ? 1 : 0;
    }
    return out;
}

namespace {

constexpr std::string_view kModelMagic = "malbench-model";
constexpr int kModelVersion = 1;

void append_list(std::string& out, std::string_view tag, const std::vector<double>& values) {
    out += tag;
    out += ' ';
    out += std::to_string(values.size());
    for (double v : values) {
        out += ' ';
        append_number(out, v);
    }
    out += '\n';
}

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorKind::CorruptModel, what); }

}  // namespace

std::string serialize_model(const TrainedModel& m) {
    std::string out;
    out += std::string(kModelMagic) + " " + std::to_string(kModelVersion) + "\n";
    out += "algorithm " + std::string(to_string(m.algorithm)) + "\n";
    out += "seed " + std::to_string(m.seed) + "\n";
    out += "width " + std::to_string(m.width) + "\n";
    out += "converged " + std::string(m.converged ? "1" : "0") + "\n";
    out += "iterations " + std::to_string(m.iterations) + "\n";
    const std::string params = m.params.to_text();
    for (std::string_view line : split(params, '\n')) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        out += "param " + std::string(trim(line.substr(0, eq))) + " " + std::string(trim(line.substr(eq + 1))) + "\n";
    }
    out += "init_score " + format_number(m.init_score) + "\n";
    out += "trees " + std::to_string(m.trees.size()) + "\n";
    for (const auto& t : m.trees) {
        out += "tree " + std::to_string(t.nodes.size()) + "\n";
        for (const auto& n : t.nodes) {
            out += std::to_string(n.feature);
            out += ' ';
            append_number(out, n.threshold);
            out += ' ' + std::to_string(n.left) + ' ' + std::to_string(n.right) + ' ';
            append_number(out, n.value);
            out += '\n';
        }
    }
    append_list(out, "mean", m.mean);
    append_list(out, "scale", m.scale);
    append_list(out, "weights", m.weights);
    out += "bias " + format_number(m.bias) + "\n";
    out += "end " + to_hex(fnv1a64(out)) + "\n";
    return out;
}

TrainedModel deserialize_model(std::string_view text) {
    const auto first_nl = text.find('\n');
    if (first_nl == std::string_view::npos) corrupt("missing header");
    {
        std::istringstream hs{std::string(text.substr(0, first_nl))};
        std::string magic;
        int version = 0;
        hs >> magic >> version;
        if (magic != kModelMagic) corrupt("not a model file");
        if (version != kModelVersion) {
            throw Error(ErrorKind::VersionMismatch,
                        "model format version " + std::to_string(version) + ", expected " + std::to_string(kModelVersion));
        }
    }
    const auto end_pos = text.rfind("\nend ");
    if (end_pos == std::string_view::npos) corrupt("truncated model (no end marker)");
    const std::string_view body = text.substr(0, end_pos + 1);
    const std::string checksum(trim(text.substr(end_pos + 5)));
    if (checksum != to_hex(fnv1a64(body))) corrupt("checksum mismatch");

    std::istringstream in{std::string(body)};
    std::string line, tag;
    std::getline(in, line);
    TrainedModel m;
    std::string params_text;
    auto expect = [&](const std::string& want) {
        if (!(in >> tag) || tag != want) corrupt("expected '" + want + "'");
    };
    auto read_double = [&]() {
        std::string token;
        if (!(in >> token)) corrupt("unexpected end of data");
        try {
            return parse_number(token);
        } catch (const Error&) {
            corrupt("bad number '" + token + "'");
        }
    };
    std::string alg;
    expect("algorithm");
    in >> alg;
    try {
        m.algorithm = parse_algorithm(alg);
    } catch (const Error&) {
        corrupt("unknown algorithm " + alg);
    }
    expect("seed");
    in >> m.seed;
    expect("width");
    in >> m.width;
    int converged = 0;
    expect("converged");
    in >> converged;
    m.converged = converged != 0;
    expect("iterations");
    in >> m.iterations;
    while (in >> tag && tag == "param") {
        std::string key, value;
        in >> key >> value;
        params_text += key + " = " + value + "\n";
    }
    try {
        m.params = Hyperparams::parse(params_text);
    } catch (const Error& e) {
        corrupt(e.what());
    }
    if (tag != "init_score") corrupt("expected 'init_score'");
    m.init_score = read_double();
    std::size_t n_trees = 0;
    expect("trees");
    in >> n_trees;
    m.trees.resize(n_trees);
    for (auto& t : m.trees) {
        std::size_t n_nodes = 0;
        expect("tree");
        in >> n_nodes;
        t.nodes.resize(n_nodes);
        for (auto& node : t.nodes) {
            in >> node.feature;
            node.threshold = read_double();
            in >> node.left >> node.right;
            node.value = read_double();
            if (!in) corrupt("bad tree node");
            const auto limit = static_cast<std::int32_t>(n_nodes);
            if (node.feature >= 0 && (node.left <= 0 || node.right <= 0 || node.left >= limit || node.right >= limit ||
                                      static_cast<std::size_t>(node.feature) >= m.width)) {
                corrupt("tree node out of range");
            }
        }
        if (t.nodes.empty()) corrupt("empty tree");
    }
    auto read_list = [&](const std::string& want, std::vector<double>& out) {
        expect(want);
        std::size_t count = 0;
        in >> count;
        out.resize(count);
        for (double& v : out) v = read_double();
    };
    read_list("mean", m.mean);
    read_list("scale", m.scale);
    read_list("weights", m.weights);
    expect("bias");
    m.bias = read_double();
    if (!in) corrupt("truncated model");
    if (m.algorithm == Algorithm::SVM && (m.weights.size() != m.width || m.mean.size() != m.width ||
                                          m.scale.size() != m.width)) {
        corrupt("SVM state does not match width");
    }
    if (m.algorithm != Algorithm::SVM && m.trees.empty()) corrupt("tree model without trees");
    return m;
}

void save_model(const TrainedModel& model, const std::string& path) {
    write_file_atomic(path, serialize_model(model));
}

TrainedModel load_model(const std::string& path) { return deserialize_model(read_file(path)); }

std::uint64_t model_fingerprint(const TrainedModel& model) { return fnv1a64(serialize_model(model)); }

std::string ModelName::str() const {
    return std::string(to_string(algorithm)) + "_" + std::to_string(n_malware) + "_malware_x" +
           std::to_string(benign_ratio) + "_benign_" + std::string(to_string(feature_set)) + "_s" +
           std::to_string(seed);
}

ModelName ModelName::parse(std::string_view text) {
    std::string name = std::filesystem::path(std::string(text)).filename().string();
    if (const auto dot = name.find('.'); dot != std::string::npos) name.resize(dot);
    auto fail = [&]() -> ModelName {
        throw Error(ErrorKind::InvalidArgument, "not a model name: '" + std::string(text) + "'");
    };
    // ALG_N_malware_xR_benign_FEATURESET_sSEED, where FEATURESET may contain '_'.
    const auto parts = split(name, '_');
    if (parts.size() < 7) return fail();
    ModelName m;
    try {
        m.algorithm = parse_algorithm(parts[0]);
        m.n_malware = static_cast<std::size_t>(parse_integer(parts[1]));
        if (parts[2] != "malware" || parts[3].size() < 2 || parts[3][0] != 'x' || parts[4] != "benign") return fail();
        m.benign_ratio = static_cast<std::size_t>(parse_integer(parts[3].substr(1)));
        const std::string_view last = parts.back();
        if (last.size() < 2 || last[0] != 's') return fail();
        m.seed = static_cast<std::uint64_t>(parse_integer(last.substr(1)));
        std::string fs;
        for (std::size_t i = 5; i + 1 < parts.size(); ++i) {
            if (!fs.empty()) fs += '_';
            fs += parts[i];
        }
        m.feature_set = parse_feature_set(fs);
    } catch (const Error&) {
        return fail();
    }
    return m;
}

}  // namespace malbench
