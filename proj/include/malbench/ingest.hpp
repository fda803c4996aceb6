#pragma once

// Streaming reader and validator for EMBER-format JSONL feature records,
// plus the compact metadata index used by the sampler.

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "malbench/common.hpp"

namespace malbench {

/// Calendar day, stored as days since 1970-01-01.
struct Date {
    std::int32_t days = 0;

    auto operator<=>(const Date&) const = default;
};

/// Accepts "YYYY-MM" (first day of the month) and "YYYY-MM-DD".
/// A trailing time component ("YYYY-MM-DD HH:MM:SS" or "...T...") is
/// accepted only if it is midnight.
Date parse_date(std::string_view text);
std::optional<Date> try_parse_date(std::string_view text);
std::string format_date(Date date);

struct StringsInfo {
    double numstrings = 0;
    double avlength = 0;
    std::array<double, 96> printabledist{};
    double printables = 0;
    double entropy = 0;
    double paths = 0;
    double urls = 0;
    double registry = 0;
    double mz = 0;

    bool operator==(const StringsInfo&) const = default;
};

struct GeneralInfo {
    double size = 0;
    double vsize = 0;
    double has_debug = 0;
    double exports = 0;
    double imports = 0;
    double has_relocations = 0;
    double has_resources = 0;
    double has_signature = 0;
    double has_tls = 0;
    double symbols = 0;

    bool operator==(const GeneralInfo&) const = default;
};

struct CoffHeader {
    double timestamp = 0;
    std::string machine;
    std::vector<std::string> characteristics;

    bool operator==(const CoffHeader&) const = default;
};

struct OptionalHeader {
    std::string subsystem;
    std::vector<std::string> dll_characteristics;
    std::string magic;
    double major_image_version = 0;
    double minor_image_version = 0;
    double major_linker_version = 0;
    double minor_linker_version = 0;
    double major_operating_system_version = 0;
    double minor_operating_system_version = 0;
    double major_subsystem_version = 0;
    double minor_subsystem_version = 0;
    double sizeof_code = 0;
    double sizeof_headers = 0;
    double sizeof_heap_commit = 0;

    bool operator==(const OptionalHeader&) const = default;
};

struct SectionInfo {
    std::string name;
    double size = 0;
    double entropy = 0;
    double vsize = 0;
    std::vector<std::string> props;

    bool operator==(const SectionInfo&) const = default;
};

struct RawSampleRecord {
    std::string appeared_text;
    Date appeared;
    int label = 0;
    std::optional<std::string> avclass;
    std::array<double, 256> histogram{};
    std::array<double, 256> byteentropy{};
    StringsInfo strings;
    GeneralInfo general;
    CoffHeader coff;
    OptionalHeader optional;
    std::string entry_section;
    std::vector<SectionInfo> sections;
    std::map<std::string, std::vector<std::string>> imports;
    std::vector<std::string> exports;

    bool operator==(const RawSampleRecord&) const = default;
};

enum class ParseMode { Strict, Lenient };

/// Parses one JSON line. `ordinal` only decorates error messages.
/// Strict mode rejects any missing field; lenient mode substitutes zeros
/// and empty collections for missing fields but still rejects wrong types
/// and arities.
RawSampleRecord parse_record(std::string_view line, std::size_t ordinal = 0,
                             ParseMode mode = ParseMode::Strict);

/// Serializes back to a single JSON line accepted by parse_record.
std::string serialize_record(const RawSampleRecord& record);

/// "-" when the record carries no family.
std::string avclass_or_sentinel(const RawSampleRecord& record);

/// Reads a JSONL file line by line. Line numbers are 1-based; blank lines
/// are skipped but counted.
class LineReader {
public:
    explicit LineReader(const std::string& path);

    /// Next non-blank line, or false at end of file.
    bool next(std::string& line, std::size_t& line_number);

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
    std::size_t line_number_ = 0;
};

/// Yields chunks of at most chunk_size parsed records in file order. Only one
/// chunk is held at a time.
class RecordStream {
public:
    RecordStream(const std::string& path, std::size_t chunk_size,
                 ParseMode mode = ParseMode::Strict);

    /// Fills `chunk`; returns false (with an empty chunk) at end of file.
    bool next_chunk(std::vector<RawSampleRecord>& chunk);

private:
    LineReader reader_;
    std::size_t chunk_size_;
    ParseMode mode_;
};

std::vector<std::vector<RawSampleRecord>> stream_records(const std::string& path,
                                                         std::size_t chunk_size,
                                                         ParseMode mode = ParseMode::Strict);

struct MetadataRow {
    std::string appeared_text;
    Date appeared;
    int label = 0;
    std::string avclass;  // "-" when absent
    std::uint32_t index = 0;
    std::uint32_t fragment = 0;

    bool operator==(const MetadataRow&) const = default;
};

/// Rows ordered by (fragment, index).
struct MetadataIndex {
    std::vector<MetadataRow> rows;
};

struct FragmentManifest;

/// Scans every fragment of the manifest and collects its metadata columns.
MetadataIndex build_metadata_index(const FragmentManifest& manifest);

inline constexpr std::string_view kMetadataHeader = "appeared,label,avclass,index,fragment";

std::string metadata_index_to_csv(const MetadataIndex& index);
void write_metadata_index(const MetadataIndex& index, const std::string& path);
MetadataIndex read_metadata_index(const std::string& path);

}  // namespace malbench
