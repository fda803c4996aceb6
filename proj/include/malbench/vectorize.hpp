#pragma once

// Fixed-order 1385-column feature vectors and on-disk CSV fragments.

#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "malbench/common.hpp"
#include "malbench/ingest.hpp"

namespace malbench {

enum class FeatureSet { Parsed, FormatAgnostic, Combined };

std::string_view to_string(FeatureSet set);
FeatureSet parse_feature_set(std::string_view text);

/// Column layout. Format-agnostic block first (histograms and strings),
/// then the parsed block (general, header, sections, imports, exports).
class FeatureLayout {
public:
    static constexpr std::size_t kHistSize = 256;
    static constexpr std::size_t kPrintDistSize = 96;
    static constexpr std::size_t kHashDll = 128;
    static constexpr std::size_t kHashImport = 256;
    static constexpr std::size_t kHashExport = 128;
    static constexpr std::size_t kHashSections = 50;

    static constexpr std::size_t kFormatAgnosticWidth = 616;
    static constexpr std::size_t kParsedWidth = 769;
    static constexpr std::size_t kWidth = 1385;

    static const std::vector<std::string>& coff_machines();
    static const std::vector<std::string>& coff_characteristics();
    static const std::vector<std::string>& subsystems();
    static const std::vector<std::string>& dll_characteristics();
    static const std::vector<std::string>& magics();
    static const std::vector<std::string>& section_props();

    FeatureLayout();

    /// The 1385 feature column names in order.
    const std::vector<std::string>& feature_names() const { return names_; }

    /// "appeared,<features>,label,avclass"
    const std::string& header_line() const { return header_; }

    /// FNV-1a of the header line.
    std::uint64_t fingerprint() const { return fingerprint_; }

    /// Column positions (into feature_names) selected by a feature set.
    const std::vector<std::size_t>& columns(FeatureSet set) const;

    // Offsets of the blocks within a feature vector.
    std::size_t offset_histogram = 0;
    std::size_t offset_byteentropy = 0;
    std::size_t offset_strings = 0;
    std::size_t offset_general = 0;
    std::size_t offset_coff_timestamp = 0;
    std::size_t offset_machine = 0;
    std::size_t offset_coff_characteristics = 0;
    std::size_t offset_subsystem = 0;
    std::size_t offset_dll_characteristics = 0;
    std::size_t offset_magic = 0;
    std::size_t offset_opt_numeric = 0;
    std::size_t offset_sections = 0;
    std::size_t offset_entry_props = 0;
    std::size_t offset_import_dlls = 0;
    std::size_t offset_import_functions = 0;
    std::size_t offset_exports = 0;

private:
    std::vector<std::string> names_;
    std::string header_;
    std::uint64_t fingerprint_ = 0;
    std::vector<std::size_t> parsed_;
    std::vector<std::size_t> format_agnostic_;
    std::vector<std::size_t> combined_;
};

const FeatureLayout& feature_layout();

/// Ordered column names for a feature set.
std::vector<std::string> feature_columns(FeatureSet set);

/// FNV-1a 64 of the UTF-8 bytes, reduced mod m.
std::size_t hash_bucket(std::string_view s, std::size_t m);

struct FeatureVector {
    std::string appeared_text;
    Date appeared;
    std::vector<double> values;
    int label = 0;
    std::string avclass;  // "-" when absent
};

FeatureVector vectorize_record(const RawSampleRecord& record,
                               const FeatureLayout& layout = feature_layout());

/// Writes into `values` (size kWidth) without allocating.
void vectorize_into(const RawSampleRecord& record, std::span<double> values,
                    const FeatureLayout& layout = feature_layout());

/// One CSV row (no trailing newline) in fragment format.
std::string fragment_row(const FeatureVector& vector);

struct FragmentInfo {
    std::uint32_t id = 0;
    std::string file;
    std::uint32_t rows = 0;

    bool operator==(const FragmentInfo&) const = default;
};

struct FragmentManifest {
    std::string dir;
    std::uint64_t layout_fingerprint = 0;
    std::vector<FragmentInfo> fragments;

    std::string path_of(const FragmentInfo& fragment) const;
    std::uint64_t total_rows() const;
};

inline constexpr std::string_view kManifestFile = "manifest.txt";

void write_manifest(const FragmentManifest& manifest);
/// Accepts either the fragment directory or the manifest file path.
FragmentManifest read_manifest(const std::string& path);

struct VectorizeOptions {
    std::size_t fragment_size = 50000;
    std::size_t batch_size = 1024;  // lines vectorized together
    unsigned workers = 1;
    ParseMode mode = ParseMode::Strict;
};

struct VectorizeStats {
    std::uint64_t records = 0;
    /// Largest number of bytes held in line and row buffers at any time.
    std::uint64_t peak_buffered_bytes = 0;
};

/// Streams the inputs in order, writing data{K}.csv fragments of at most
/// fragment_size rows plus manifest.txt into out_dir.
FragmentManifest vectorize_corpus(const std::vector<std::string>& inputs, const std::string& out_dir,
                                  const VectorizeOptions& options = {},
                                  VectorizeStats* stats = nullptr);

/// Random access to fragment rows. Row byte offsets are indexed lazily, one
/// fragment at a time.
class FragmentStore {
public:
    explicit FragmentStore(FragmentManifest manifest);

    const FragmentManifest& manifest() const { return manifest_; }

    struct RowData {
        std::string appeared_text;
        int label = 0;
        std::string avclass;
    };

    /// Reads the given rows (ascending) of one fragment. For each row the
    /// selected feature columns are written to `out` (row-major, stride
    /// columns.size()) and metadata appended to `meta` when non-null.
    void read_rows(std::uint32_t fragment, std::span<const std::uint32_t> rows,
                   std::span<const std::size_t> columns, std::span<double> out,
                   std::vector<RowData>* meta) const;

private:
    const std::vector<std::uint64_t>& offsets(std::uint32_t fragment) const;

    FragmentManifest manifest_;
    mutable std::vector<std::vector<std::uint64_t>> offsets_;
    mutable std::vector<bool> indexed_;
    mutable std::mutex mutex_;
};

/// Parses one fragment CSV row into appeared, 1385 values, label and avclass.
void parse_fragment_row(std::string_view line, std::span<double> values, FragmentStore::RowData& meta);

}  // namespace malbench
