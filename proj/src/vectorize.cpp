#include "malbench/vectorize.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace malbench {

namespace fs = std::filesystem;

std::string_view to_string(FeatureSet set) {
    switch (set) {
        case FeatureSet::Parsed: return "parsed";
        case FeatureSet::FormatAgnostic: return "format_agnostic";
        case FeatureSet::Combined: return "combined";
    }
    return "combined";
}

FeatureSet parse_feature_set(std::string_view text) {
    if (text == "parsed") return FeatureSet::Parsed;
    if (text == "format_agnostic") return FeatureSet::FormatAgnostic;
    if (text == "combined") return FeatureSet::Combined;
    throw Error(ErrorKind::InvalidArgument, "unknown feature set '" + std::string(text) + "'");
}

const std::vector<std::string>& FeatureLayout::coff_machines() {
    static const std::vector<std::string> v = {"AMD64", "ARM",     "ARMNT",   "I386",
                                               "IA64",  "MIPS16",  "MIPSFPU", "POWERPC",
                                               "R4000", "SH3",     "SH4",     "THUMB"};
    return v;
}

const std::vector<std::string>& FeatureLayout::coff_characteristics() {
    static const std::vector<std::string> v = {
        "AGGRESSIVE_WS_TRIM", "BYTES_REVERSED_HI",       "BYTES_REVERSED_LO",
        "CHARA_32BIT_MACHINE", "DEBUG_STRIPPED",         "DLL",
        "EXECUTABLE_IMAGE",   "LARGE_ADDRESS_AWARE",     "LINE_NUMS_STRIPPED",
        "LOCAL_SYMS_STRIPPED", "NET_RUN_FROM_SWAP",      "RELOCS_STRIPPED",
        "REMOVABLE_RUN_FROM_SWAP", "SYSTEM",             "UP_SYSTEM_ONLY"};
    return v;
}

const std::vector<std::string>& FeatureLayout::subsystems() {
    static const std::vector<std::string> v = {
        "EFI_APPLICATION", "EFI_BOOT_SERVICE_DRIVER", "EFI_RUNTIME_DRIVER", "NATIVE",
        "POSIX_CUI",       "UNKNOWN",                 "WINDOWS_BOOT_APPLICATION",
        "WINDOWS_CE_GUI",  "WINDOWS_CUI",             "WINDOWS_GUI",        "XBOX"};
    return v;
}

const std::vector<std::string>& FeatureLayout::dll_characteristics() {
    static const std::vector<std::string> v = {
        "APPCONTAINER", "DYNAMIC_BASE", "FORCE_INTEGRITY", "GUARD_CF",
        "HIGH_ENTROPY_VA", "NO_BIND",   "NO_ISOLATION",    "NO_SEH",
        "NX_COMPAT",    "TERMINAL_SERVER_AWARE", "WDM_DRIVER"};
    return v;
}

const std::vector<std::string>& FeatureLayout::magics() {
    static const std::vector<std::string> v = {"PE32", "PE32_PLUS"};
    return v;
}

const std::vector<std::string>& FeatureLayout::section_props() {
    static const std::vector<std::string> v = {
        "ALIGN_1024BYTES", "ALIGN_128BYTES",  "ALIGN_16BYTES",   "ALIGN_1BYTES",
        "ALIGN_2048BYTES", "ALIGN_256BYTES",  "ALIGN_2BYTES",    "ALIGN_32BYTES",
        "ALIGN_4096BYTES", "ALIGN_4BYTES",    "ALIGN_512BYTES",  "ALIGN_64BYTES",
        "ALIGN_8192BYTES", "ALIGN_8BYTES",    "CNT_CODE",        "CNT_INITIALIZED_DATA",
        "CNT_UNINITIALIZED_DATA", "GPREL",    "LNK_COMDAT",      "LNK_INFO",
        "LNK_NRELOC_OVFL", "LNK_OTHER",       "LNK_REMOVE",      "MEM_16BIT",
        "MEM_DISCARDABLE", "MEM_EXECUTE",     "MEM_LOCKED",      "MEM_NOT_CACHED",
        "MEM_NOT_PAGED",   "MEM_PRELOAD",     "MEM_READ",        "MEM_SHARED",
        "MEM_WRITE",       "TYPE_NO_PAD"};
    return v;
}

FeatureLayout::FeatureLayout() {
    auto& n = names_;
    offset_histogram = n.size();
    for (std::size_t i = 0; i < kHistSize; ++i) n.push_back("histogram_" + std::to_string(i));
    offset_byteentropy = n.size();
    for (std::size_t i = 0; i < kHistSize; ++i) n.push_back("byteentropy_" + std::to_string(i));

    offset_strings = n.size();
    n.push_back("strings_num");
    n.push_back("strings_avlength");
    for (std::size_t i = 0; i < kPrintDistSize; ++i) n.push_back("strings_printabledist_" + std::to_string(i));
    for (const char* s : {"strings_printables", "strings_entropy", "strings_paths", "strings_urls",
                          "strings_registry", "strings_MZ"}) {
        n.push_back(s);
    }

    offset_general = n.size();
    for (const char* s : {"general_size", "general_vsize", "general_has_debug", "general_exports",
                          "general_imports", "general_has_relocations", "general_has_resources",
                          "general_has_signature", "general_has_tls", "general_symbols"}) {
        n.push_back(s);
    }

    offset_coff_timestamp = n.size();
    n.push_back("header_coff_timestamp");
    offset_machine = n.size();
    for (const auto& m : coff_machines()) n.push_back("header_coff_machine_" + m);
    offset_coff_characteristics = n.size();
    for (const auto& c : coff_characteristics()) n.push_back("header_coff_" + c);
    offset_subsystem = n.size();
    for (const auto& s : subsystems()) n.push_back("header_opt_subsystem_" + s);
    offset_dll_characteristics = n.size();
    for (const auto& c : dll_characteristics()) n.push_back("header_opt_dll_characteristic_" + c);
    offset_magic = n.size();
    for (const auto& m : magics()) n.push_back("header_opt_" + m);
    offset_opt_numeric = n.size();
    for (const char* s :
         {"header_opt_major_image_version", "header_opt_minor_image_version",
          "header_opt_major_linker_version", "header_opt_minor_linker_version",
          "header_opt_major_operating_system_version", "header_opt_minor_operating_system_version",
          "header_opt_major_subsystem_version", "header_opt_minor_subsystem_version",
          "header_opt_sizeof_code", "header_opt_sizeof_headers", "header_opt_sizeof_heap_commit"}) {
        n.push_back(s);
    }

    offset_sections = n.size();
    for (std::size_t i = 0; i < kHashSections; ++i) {
        const std::string prefix = "sections_h" + std::to_string(i);
        n.push_back(prefix + "_size");
        n.push_back(prefix + "_entropy");
        n.push_back(prefix + "_vsize");
    }
    offset_entry_props = n.size();
    for (const auto& p : section_props()) n.push_back("sections_ENTRY_" + p);

    offset_import_dlls = n.size();
    for (std::size_t i = 0; i < kHashDll; ++i) n.push_back("imports_dll_h" + std::to_string(i) + "_imported");
    offset_import_functions = n.size();
    for (std::size_t i = 0; i < kHashImport; ++i) n.push_back("imports_fun_h" + std::to_string(i) + "_imported");
    offset_exports = n.size();
    for (std::size_t i = 0; i < kHashExport; ++i) n.push_back("exports_h" + std::to_string(i));

    if (n.size() != kWidth) throw std::logic_error("feature layout width mismatch");

    header_ = "appeared";
    for (const auto& name : n) {
        header_ += ',';
        header_ += name;
    }
    header_ += ",label,avclass";
    fingerprint_ = fnv1a64(header_);

    for (std::size_t i = 0; i < n.size(); ++i) {
        const std::string_view name = n[i];
        const bool agnostic = name.starts_with("histogram") || name.starts_with("byteentropy") ||
                              name.starts_with("strings");
        (agnostic ? format_agnostic_ : parsed_).push_back(i);
        combined_.push_back(i);
    }
}

const std::vector<std::size_t>& FeatureLayout::columns(FeatureSet set) const {
    switch (set) {
        case FeatureSet::Parsed: return parsed_;
        case FeatureSet::FormatAgnostic: return format_agnostic_;
        case FeatureSet::Combined: return combined_;
    }
    return combined_;
}

const FeatureLayout& feature_layout() {
    static const FeatureLayout layout;
    return layout;
}

std::vector<std::string> feature_columns(FeatureSet set) {
    const auto& layout = feature_layout();
    std::vector<std::string> out;
    for (std::size_t i : layout.columns(set)) out.push_back(layout.feature_names()[i]);
    return out;
}

std::size_t hash_bucket(std::string_view s, std::size_t m) {
    return static_cast<std::size_t>(fnv1a64(s) % m);
}

namespace {

void one_hot(std::span<double> out, const std::vector<std::string>& vocab, const std::string& value) {
    for (std::size_t i = 0; i < vocab.size(); ++i) out[i] = vocab[i] == value ? 1.0 : 0.0;
}

void flags(std::span<double> out, const std::vector<std::string>& vocab,
           const std::vector<std::string>& present) {
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        out[i] = std::find(present.begin(), present.end(), vocab[i]) != present.end() ? 1.0 : 0.0;
    }
}

}  // namespace

void vectorize_into(const RawSampleRecord& r, std::span<double> v, const FeatureLayout& layout) {
    if (v.size() != FeatureLayout::kWidth) {
        throw Error(ErrorKind::WidthMismatch, "feature buffer must hold 1385 values");
    }
    std::fill(v.begin(), v.end(), 0.0);
    std::copy(r.histogram.begin(), r.histogram.end(), v.begin() + static_cast<std::ptrdiff_t>(layout.offset_histogram));
    std::copy(r.byteentropy.begin(), r.byteentropy.end(),
              v.begin() + static_cast<std::ptrdiff_t>(layout.offset_byteentropy));

    std::size_t k = layout.offset_strings;
    v[k++] = r.strings.numstrings;
    v[k++] = r.strings.avlength;
    for (double d : r.strings.printabledist) v[k++] = d;
    v[k++] = r.strings.printables;
    v[k++] = r.strings.entropy;
    v[k++] = r.strings.paths;
    v[k++] = r.strings.urls;
    v[k++] = r.strings.registry;
    v[k++] = r.strings.mz;

    const auto& g = r.general;
    k = layout.offset_general;
    for (double d : {g.size, g.vsize, g.has_debug, g.exports, g.imports, g.has_relocations,
                     g.has_resources, g.has_signature, g.has_tls, g.symbols}) {
        v[k++] = d;
    }

    v[layout.offset_coff_timestamp] = r.coff.timestamp;
    one_hot(v.subspan(layout.offset_machine, 12), FeatureLayout::coff_machines(), r.coff.machine);
    flags(v.subspan(layout.offset_coff_characteristics, 15), FeatureLayout::coff_characteristics(),
          r.coff.characteristics);
    const auto& o = r.optional;
    one_hot(v.subspan(layout.offset_subsystem, 11), FeatureLayout::subsystems(), o.subsystem);
    flags(v.subspan(layout.offset_dll_characteristics, 11), FeatureLayout::dll_characteristics(),
          o.dll_characteristics);
    one_hot(v.subspan(layout.offset_magic, 2), FeatureLayout::magics(), o.magic);
    k = layout.offset_opt_numeric;
    for (double d : {o.major_image_version, o.minor_image_version, o.major_linker_version,
                     o.minor_linker_version, o.major_operating_system_version,
                     o.minor_operating_system_version, o.major_subsystem_version,
                     o.minor_subsystem_version, o.sizeof_code, o.sizeof_headers, o.sizeof_heap_commit}) {
        v[k++] = d;
    }

    // Every section lands in its name's bucket; later sections overwrite earlier ones.
    const SectionInfo* entry = nullptr;
    for (const auto& s : r.sections) {
        if (s.name == r.entry_section) entry = &s;
        const std::size_t base = layout.offset_sections + 3 * hash_bucket(s.name, FeatureLayout::kHashSections);
        v[base] = s.size;
        v[base + 1] = s.entropy;
        v[base + 2] = s.vsize;
    }
    if (entry) flags(v.subspan(layout.offset_entry_props, 34), FeatureLayout::section_props(), entry->props);

    std::string key;
    for (const auto& [dll, funcs] : r.imports) {
        v[layout.offset_import_dlls + hash_bucket(dll, FeatureLayout::kHashDll)] = 1.0;
        for (const auto& fn : funcs) {
            key.assign(dll);
            key += ':';
            key += fn;
            v[layout.offset_import_functions + hash_bucket(key, FeatureLayout::kHashImport)] = 1.0;
        }
    }
    for (const auto& e : r.exports) v[layout.offset_exports + hash_bucket(e, FeatureLayout::kHashExport)] = 1.0;
}

FeatureVector vectorize_record(const RawSampleRecord& record, const FeatureLayout& layout) {
    FeatureVector fv;
    fv.appeared_text = record.appeared_text;
    fv.appeared = record.appeared;
    fv.values.assign(FeatureLayout::kWidth, 0.0);
    vectorize_into(record, fv.values, layout);
    fv.label = record.label;
    fv.avclass = avclass_or_sentinel(record);
    return fv;
}

namespace {

void append_row(std::string& out, const std::string& appeared, std::span<const double> values, int label,
                const std::string& avclass) {
    out += appeared;
    for (double d : values) {
        out += ',';
        append_number(out, d);
    }
    out += ',';
    out += std::to_string(label);
    out += ',';
    out += avclass;
}

}  // namespace

std::string fragment_row(const FeatureVector& fv) {
    std::string out;
    out.reserve(4096);
    append_row(out, fv.appeared_text, fv.values, fv.label, fv.avclass);
    return out;
}

std::string FragmentManifest::path_of(const FragmentInfo& fragment) const {
    return (fs::path(dir) / fragment.file).string();
}

std::uint64_t FragmentManifest::total_rows() const {
    std::uint64_t total = 0;
    for (const auto& f : fragments) total += f.rows;
    return total;
}

void write_manifest(const FragmentManifest& manifest) {
    std::string out = "malbench-fragments 1\n";
    out += "layout " + to_hex(manifest.layout_fingerprint) + "\n";
    out += "columns " + std::to_string(FeatureLayout::kWidth) + "\n";
    for (const auto& f : manifest.fragments) {
        out += "fragment " + std::to_string(f.id) + " " + f.file + " " + std::to_string(f.rows) + "\n";
    }
    write_file_atomic((fs::path(manifest.dir) / kManifestFile).string(), out);
}

FragmentManifest read_manifest(const std::string& path) {
    fs::path p(path);
    if (fs::is_directory(p)) p /= kManifestFile;
    if (!fs::exists(p)) throw Error(ErrorKind::MissingFragment, "no manifest at " + p.string());
    std::istringstream in(read_file(p.string()));
    FragmentManifest m;
    m.dir = p.parent_path().string();
    std::string line;
    if (!std::getline(in, line) || line != "malbench-fragments 1") {
        throw Error(ErrorKind::InconsistentManifest, p.string() + ": unrecognized manifest header");
    }
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "layout") {
            std::string hex;
            ls >> hex;
            m.layout_fingerprint = std::stoull(hex, nullptr, 16);
        } else if (tag == "columns") {
            std::size_t cols = 0;
            ls >> cols;
            if (cols != FeatureLayout::kWidth) {
                throw Error(ErrorKind::InconsistentManifest, "manifest declares " + std::to_string(cols) + " columns");
            }
        } else if (tag == "fragment") {
            FragmentInfo f;
            ls >> f.id >> f.file >> f.rows;
            if (!ls) throw Error(ErrorKind::InconsistentManifest, "bad fragment line: " + line);
            if (f.id != m.fragments.size()) {
                throw Error(ErrorKind::InconsistentManifest, "fragment ids must be 0..k in order");
            }
            m.fragments.push_back(std::move(f));
        } else {
            throw Error(ErrorKind::InconsistentManifest, "unknown manifest entry: " + line);
        }
    }
    if (m.layout_fingerprint != feature_layout().fingerprint()) {
        throw Error(ErrorKind::InconsistentManifest, "layout fingerprint does not match this build");
    }
    return m;
}

FragmentManifest vectorize_corpus(const std::vector<std::string>& inputs, const std::string& out_dir,
                                  const VectorizeOptions& options, VectorizeStats* stats) {
    if (options.fragment_size == 0) throw Error(ErrorKind::InvalidArgument, "fragment_size must be positive");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + out_dir + ": " + ec.message());

    const auto& layout = feature_layout();
    FragmentManifest manifest;
    manifest.dir = out_dir;
    manifest.layout_fingerprint = layout.fingerprint();

    VectorizeStats local;
    std::ofstream out;
    FragmentInfo current;
    bool open = false;

    auto close_fragment = [&] {
        if (!open) return;
        out.close();
        if (!out) throw Error(ErrorKind::IoFailure, "write failed for fragment " + current.file);
        manifest.fragments.push_back(current);
        open = false;
    };
    auto open_fragment = [&] {
        current = FragmentInfo{};
        current.id = static_cast<std::uint32_t>(manifest.fragments.size());
        current.file = "data" + std::to_string(current.id) + ".csv";
        out.open(manifest.path_of(current), std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + manifest.path_of(current));
        out << layout.header_line() << '\n';
        open = true;
    };

    const std::size_t batch = std::max<std::size_t>(1, std::min(options.batch_size, options.fragment_size));
    std::vector<std::string> lines(batch);
    std::vector<std::size_t> line_numbers(batch);
    std::vector<std::string> rows(batch);

    for (const auto& input : inputs) {
        LineReader reader(input);
        for (;;) {
            // Never let a batch straddle a fragment boundary.
            std::size_t room = batch;
            if (open) room = std::min(room, options.fragment_size - current.rows);
            std::size_t count = 0;
            while (count < room && reader.next(lines[count], line_numbers[count])) ++count;
            if (count == 0) break;

            parallel_for(count, options.workers, [&](std::size_t i) {
                RawSampleRecord record;
                try {
                    record = parse_record(lines[i], 0, options.mode);
                } catch (const Error& e) {
                    throw Error(e.kind(), input + ": line " + std::to_string(line_numbers[i]) + ": " + e.message());
                }
                std::vector<double> values(FeatureLayout::kWidth);
                vectorize_into(record, values, layout);
                rows[i].clear();
                append_row(rows[i], record.appeared_text, values, record.label, avclass_or_sentinel(record));
            });

            std::uint64_t held = 0;
            for (std::size_t i = 0; i < count; ++i) held += lines[i].capacity() + rows[i].capacity();
            local.peak_buffered_bytes = std::max(local.peak_buffered_bytes, held);

            for (std::size_t i = 0; i < count; ++i) {
                if (!open) open_fragment();
                out << rows[i] << '\n';
                ++current.rows;
                ++local.records;
                if (current.rows == options.fragment_size) close_fragment();
            }
        }
    }
    close_fragment();
    write_manifest(manifest);
    if (stats) *stats = local;
    return manifest;
}

void parse_fragment_row(std::string_view line, std::span<double> values, FragmentStore::RowData& meta) {
    if (values.size() != FeatureLayout::kWidth) {
        throw Error(ErrorKind::WidthMismatch, "row buffer must hold 1385 values");
    }
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::size_t pos = line.find(',');
    if (pos == std::string_view::npos) throw Error(ErrorKind::SchemaViolation, "fragment row has no fields");
    meta.appeared_text = std::string(line.substr(0, pos));
    const char* p = line.data() + pos + 1;
    const char* end = line.data() + line.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto res = std::from_chars(p, end, values[i]);
        if (res.ec != std::errc() || res.ptr == end || *res.ptr != ',') {
            throw Error(ErrorKind::SchemaViolation, "fragment row: bad value in column " + std::to_string(i + 1));
        }
        p = res.ptr + 1;
    }
    int label = 0;
    auto res = std::from_chars(p, end, label);
    if (res.ec != std::errc() || res.ptr == end || *res.ptr != ',') {
        throw Error(ErrorKind::SchemaViolation, "fragment row: bad label");
    }
    meta.label = label;
    meta.avclass = std::string(res.ptr + 1, end);
}

FragmentStore::FragmentStore(FragmentManifest manifest)
    : manifest_(std::move(manifest)),
      offsets_(manifest_.fragments.size()),
      indexed_(manifest_.fragments.size(), false) {}

const std::vector<std::uint64_t>& FragmentStore::offsets(std::uint32_t fragment) const {
    std::lock_guard lock(mutex_);
    if (fragment >= manifest_.fragments.size()) {
        throw Error(ErrorKind::DanglingRowId, "no fragment " + std::to_string(fragment));
    }
    if (indexed_[fragment]) return offsets_[fragment];
    const auto& info = manifest_.fragments[fragment];
    const std::string path = manifest_.path_of(info);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingFragment, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != feature_layout().header_line()) {
        throw Error(ErrorKind::InconsistentManifest, path + ": unexpected header");
    }
    auto& offs = offsets_[fragment];
    offs.clear();
    offs.reserve(info.rows);
    std::uint64_t pos = line.size() + 1;
    while (std::getline(in, line)) {
        if (!line.empty()) offs.push_back(pos);
        pos += line.size() + 1;
    }
    if (offs.size() != info.rows) {
        throw Error(ErrorKind::InconsistentManifest, path + " holds " + std::to_string(offs.size()) +
                                                         " rows, manifest says " + std::to_string(info.rows));
    }
    indexed_[fragment] = true;
    return offs;
}

void FragmentStore::read_rows(std::uint32_t fragment, std::span<const std::uint32_t> rows,
                              std::span<const std::size_t> columns, std::span<double> out,
                              std::vector<RowData>* meta) const {
    if (rows.empty()) return;
    const auto& offs = offsets(fragment);
    if (out.size() < rows.size() * columns.size()) throw Error(ErrorKind::WidthMismatch, "output buffer too small");
    const std::string path = manifest_.path_of(manifest_.fragments[fragment]);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingFragment, "cannot open " + path);
    std::vector<double> values(FeatureLayout::kWidth);
    std::string line;
    RowData row_meta;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::uint32_t row = rows[r];
        if (row >= offs.size()) {
            throw Error(ErrorKind::DanglingRowId,
                        "row " + std::to_string(row) + " not in fragment " + std::to_string(fragment));
        }
        in.seekg(static_cast<std::streamoff>(offs[row]));
        if (!std::getline(in, line)) throw Error(ErrorKind::IoFailure, "read failed: " + path);
        parse_fragment_row(line, values, row_meta);
        double* dst = out.data() + r * columns.size();
        for (std::size_t c = 0; c < columns.size(); ++c) dst[c] = values[columns[c]];
        if (meta) meta->push_back(row_meta);
    }
}

}  // namespace malbench
