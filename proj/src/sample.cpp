#include "malbench/sample.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>

namespace malbench {

void SplitConfig::validate() const {
    if (!(first_malware_time < split_time)) {
        throw Error(ErrorKind::InvalidArgument, "first_malware_time must precede split_time");
    }
    if (top_n == 0) throw Error(ErrorKind::InvalidArgument, "top_n must be positive");
}

std::vector<std::string> top_families(const std::vector<std::string>& avclasses, std::size_t top_n) {
    std::map<std::string, std::size_t> counts;
    for (const auto& a : avclasses) ++counts[a];
    std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < sorted.size() && i < top_n; ++i) out.push_back(sorted[i].first);
    return out;
}

Pools partition_pools(const MetadataIndex& index, const SplitConfig& config) {
    config.validate();
    if (index.rows.empty()) throw Error(ErrorKind::EmptyPool, "metadata index is empty");

    auto is_malware = [](const MetadataRow& r) { return r.label == 1 && r.avclass != "-"; };
    auto is_train = [&](const MetadataRow& r) {
        return config.first_malware_time <= r.appeared && r.appeared < config.split_time;
    };
    auto is_test = [&](const MetadataRow& r) { return config.split_time < r.appeared; };

    std::vector<std::string> train_fam, test_fam;
    for (const auto& r : index.rows) {
        if (!is_malware(r)) continue;
        if (is_train(r)) train_fam.push_back(r.avclass);
        if (is_test(r)) test_fam.push_back(r.avclass);
    }
    const auto train_top = top_families(train_fam, config.top_n);
    const auto test_top = top_families(test_fam, config.top_n);
    const std::set<std::string> test_set(test_top.begin(), test_top.end());

    Pools pools;
    for (const auto& f : train_top)
        if (test_set.count(f)) pools.families.insert(f);

    std::vector<const MetadataRow*> ordered;
    ordered.reserve(index.rows.size());
    for (const auto& r : index.rows) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(), [](const MetadataRow* a, const MetadataRow* b) {
        return std::tie(a->fragment, a->index) < std::tie(b->fragment, b->index);
    });

    for (const MetadataRow* r : ordered) {
        const RowRef ref{r->fragment, r->index};
        if (is_malware(*r) && pools.families.count(r->avclass)) {
            if (is_train(*r)) pools.train_malware.push_back(ref);
            if (is_test(*r)) pools.test_malware.push_back(ref);
        } else if (r->label == 0) {
            if (is_train(*r)) pools.train_benign.push_back(ref);
            if (is_test(*r)) pools.test_benign.push_back(ref);
        }
    }

    std::string empty;
    auto check = [&](const std::vector<RowRef>& pool, const char* name) {
        if (pool.empty()) empty += std::string(empty.empty() ? "" : ", ") + name;
    };
    check(pools.train_malware, "train_malware");
    check(pools.test_malware, "test_malware");
    check(pools.train_benign, "train_benign");
    check(pools.test_benign, "test_benign");
    if (!empty.empty()) {
        throw Error(ErrorKind::EmptyPool,
                    "empty pool(s): " + empty + " (index rows " + std::to_string(index.rows.size()) +
                        ", intersected families " + std::to_string(pools.families.size()) + ")");
    }
    return pools;
}

std::string_view to_string(Role role) { return role == Role::Train ? "train" : "test"; }

Role parse_role(std::string_view text) {
    if (text == "train") return Role::Train;
    if (text == "test") return Role::Test;
    throw Error(ErrorKind::InvalidArgument, "role must be train or test, got '" + std::string(text) + "'");
}

std::string DatasetSpec::name() const {
    return std::string(to_string(role)) + "_" + std::to_string(n_malware) + "_malware_x" +
           std::to_string(benign_ratio) + "_benign_" + std::string(to_string(feature_set)) + "_s" +
           std::to_string(seed);
}

std::size_t Dataset::malware_count() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const DatasetRow& r) { return r.label == 1; }));
}

std::vector<RowRef> draw_without_replacement(const std::vector<RowRef>& pool, std::size_t n,
                                             std::uint64_t seed, std::string_view tag) {
    std::vector<RowRef> work = pool;
    SplitMix64 rng(derive_seed(seed, tag));
    const std::size_t size = work.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.bounded(size - i));
        std::swap(work[i], work[j]);
    }
    work.resize(n);
    return work;
}

Dataset draw_dataset(const Pools& pools, const DatasetSpec& spec) {
    if (spec.n_malware == 0 || spec.benign_ratio == 0) {
        throw Error(ErrorKind::InvalidArgument, "n_malware and benign_ratio must be positive");
    }
    const auto& malware = spec.role == Role::Train ? pools.train_malware : pools.test_malware;
    const auto& benign = spec.role == Role::Train ? pools.train_benign : pools.test_benign;
    const std::size_t n_benign = spec.n_benign();
    if (spec.n_malware > malware.size()) {
        throw Error(ErrorKind::InsufficientPool,
                    std::string(to_string(spec.role)) + " malware pool holds " + std::to_string(malware.size()) +
                        ", need " + std::to_string(spec.n_malware) + " (short by " +
                        std::to_string(spec.n_malware - malware.size()) + ")");
    }
    if (n_benign > benign.size()) {
        throw Error(ErrorKind::InsufficientPool,
                    std::string(to_string(spec.role)) + " benign pool holds " + std::to_string(benign.size()) +
                        ", need " + std::to_string(n_benign) + " (short by " +
                        std::to_string(n_benign - benign.size()) + ")");
    }
    Dataset ds;
    ds.spec = spec;
    for (const auto& ref : draw_without_replacement(malware, spec.n_malware, spec.seed, "malware")) {
        ds.rows.push_back({ref, 1});
    }
    for (const auto& ref : draw_without_replacement(benign, n_benign, spec.seed, "benign")) {
        ds.rows.push_back({ref, 0});
    }
    std::sort(ds.rows.begin(), ds.rows.end(),
              [](const DatasetRow& a, const DatasetRow& b) { return a.ref < b.ref; });
    return ds;
}

std::string dataset_fingerprint_bytes(const Dataset& dataset) {
    std::string out = dataset.spec.name();
    out += '\n';
    for (const auto& r : dataset.rows) {
        out += std::to_string(r.ref.fragment);
        out += ':';
        out += std::to_string(r.ref.index);
        out += ':';
        out += std::to_string(r.label);
        out += '\n';
    }
    return out;
}

MaterializedDataset materialize(const Dataset& dataset, const FragmentStore& store, FeatureSet selector) {
    const auto& columns = feature_layout().columns(selector);
    MaterializedDataset out;
    out.feature_set = selector;
    out.x = Matrix(dataset.rows.size(), columns.size());
    out.y.reserve(dataset.rows.size());
    out.meta.reserve(dataset.rows.size());

    std::size_t begin = 0;
    std::vector<std::uint32_t> rows;
    while (begin < dataset.rows.size()) {
        const std::uint32_t fragment = dataset.rows[begin].ref.fragment;
        std::size_t end = begin;
        rows.clear();
        while (end < dataset.rows.size() && dataset.rows[end].ref.fragment == fragment) {
            rows.push_back(dataset.rows[end].ref.index);
            ++end;
        }
        if (fragment >= store.manifest().fragments.size()) {
            throw Error(ErrorKind::DanglingRowId, "fragment " + std::to_string(fragment) + " not in manifest");
        }
        std::span<double> dst(out.x.data.data() + begin * columns.size(), rows.size() * columns.size());
        store.read_rows(fragment, rows, columns, dst, &out.meta);
        begin = end;
    }
    for (const auto& r : dataset.rows) out.y.push_back(r.label);
    return out;
}

void write_dataset_csv(const MaterializedDataset& data, const std::string& path) {
    const auto& layout = feature_layout();
    const auto& columns = layout.columns(data.feature_set);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
    std::string line = "appeared";
    for (std::size_t c : columns) {
        line += ',';
        line += layout.feature_names()[c];
    }
    line += ",label,avclass\n";
    out << line;
    for (std::size_t i = 0; i < data.x.rows; ++i) {
        line.clear();
        line += data.meta.empty() ? std::string("1970-01") : data.meta[i].appeared_text;
        for (double v : data.x.row(i)) {
            line += ',';
            append_number(line, v);
        }
        line += ',';
        line += std::to_string(data.y[i]);
        line += ',';
        line += data.meta.empty() ? std::string("-") : data.meta[i].avclass;
        line += '\n';
        out << line;
    }
    if (!out) throw Error(ErrorKind::IoFailure, "write failed: " + path);
}

MaterializedDataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw Error(ErrorKind::SchemaViolation, path + ": empty file");
    if (!header.empty() && header.back() == '\r') header.pop_back();

    MaterializedDataset out;
    bool matched = false;
    for (FeatureSet set : {FeatureSet::Parsed, FeatureSet::FormatAgnostic, FeatureSet::Combined}) {
        std::string expected = "appeared";
        for (const auto& name : feature_columns(set)) expected += "," + name;
        expected += ",label,avclass";
        if (expected == header) {
            out.feature_set = set;
            matched = true;
            break;
        }
    }
    if (!matched) throw Error(ErrorKind::SchemaViolation, path + ": header matches no feature set");
    const std::size_t width = feature_layout().columns(out.feature_set).size();

    std::vector<double> values;
    std::string line;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        if (line.back() == '\r') line.pop_back();
        const auto fields = split(line, ',');
        if (fields.size() != width + 3) {
            throw Error(ErrorKind::SchemaViolation, path + ":" + std::to_string(line_number) + ": expected " +
                                                        std::to_string(width + 3) + " fields");
        }
        FragmentStore::RowData meta;
        meta.appeared_text = std::string(fields[0]);
        for (std::size_t c = 0; c < width; ++c) values.push_back(parse_number(fields[c + 1]));
        meta.label = static_cast<int>(parse_integer(fields[width + 1]));
        meta.avclass = std::string(fields[width + 2]);
        out.y.push_back(meta.label);
        out.meta.push_back(std::move(meta));
    }
    out.x.rows = out.y.size();
    out.x.cols = width;
    out.x.data = std::move(values);
    return out;
}

}  // namespace malbench
