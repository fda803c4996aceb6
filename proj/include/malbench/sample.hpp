#pragma once

// Temporal, family-filtered pools and seeded train/test dataset draws.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "malbench/ingest.hpp"
#include "malbench/matrix.hpp"
#include "malbench/vectorize.hpp"

namespace malbench {

struct SplitConfig {
    Date first_malware_time = parse_date("2018-01-01");
    Date split_time = parse_date("2018-07-31");
    std::size_t top_n = 50;

    void validate() const;
};

struct RowRef {
    std::uint32_t fragment = 0;
    std::uint32_t index = 0;

    auto operator<=>(const RowRef&) const = default;
};

/// Four disjoint pools, each in (fragment, index) order.
struct Pools {
    std::vector<RowRef> train_malware;
    std::vector<RowRef> test_malware;
    std::vector<RowRef> train_benign;
    std::vector<RowRef> test_benign;
    std::set<std::string> families;  // train top-n intersected with test top-n
};

/// Train rows: first_malware_time <= appeared < split_time. Test rows:
/// appeared > split_time. Malware: label 1 with a family in the
/// intersection. Benign: label 0. Throws EmptyPool if any pool is empty.
Pools partition_pools(const MetadataIndex& index, const SplitConfig& config = {});

/// Top-n families by count, ties broken by name.
std::vector<std::string> top_families(const std::vector<std::string>& avclasses, std::size_t top_n);

enum class Role { Train, Test };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct DatasetSpec {
    Role role = Role::Train;
    std::size_t n_malware = 0;
    std::size_t benign_ratio = 1;
    FeatureSet feature_set = FeatureSet::Combined;
    std::uint64_t seed = 0;

    std::size_t n_benign() const { return n_malware * benign_ratio; }

    /// {role}_{n}_malware_x{ratio}_benign_{featureset}_s{seed}
    std::string name() const;

    bool operator==(const DatasetSpec&) const = default;
};

struct DatasetRow {
    RowRef ref;
    int label = 0;

    bool operator==(const DatasetRow&) const = default;
};

/// Drawn rows in (fragment, index) order.
struct Dataset {
    DatasetSpec spec;
    std::vector<DatasetRow> rows;

    std::size_t malware_count() const;
};

/// Draws n uniformly without replacement: partial Fisher-Yates over the pool
/// (in pool order) driven by SplitMix64 seeded with derive_seed(seed, tag).
std::vector<RowRef> draw_without_replacement(const std::vector<RowRef>& pool, std::size_t n,
                                             std::uint64_t seed, std::string_view tag);

/// Throws InsufficientPool naming the deficient class and the shortfall.
Dataset draw_dataset(const Pools& pools, const DatasetSpec& spec);

/// Compact byte encoding of the row list, used for determinism checks.
std::string dataset_fingerprint_bytes(const Dataset& dataset);

struct MaterializedDataset {
    Matrix x;
    std::vector<int> y;
    std::vector<FragmentStore::RowData> meta;
    FeatureSet feature_set = FeatureSet::Combined;
};

MaterializedDataset materialize(const Dataset& dataset, const FragmentStore& store, FeatureSet selector);

/// Dataset CSV: appeared, the selector's feature columns, label, avclass.
void write_dataset_csv(const MaterializedDataset& data, const std::string& path);
MaterializedDataset read_dataset_csv(const std::string& path);

}  // namespace malbench
