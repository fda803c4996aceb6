#include "malbench/ingest.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

#include "json.hpp"
#include "malbench/vectorize.hpp"

namespace malbench {

using nlohmann::json;

namespace {

bool valid_ymd(int y, unsigned m, unsigned d) {
    return std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m},
                                       std::chrono::day{d}}
        .ok();
}

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

}  // namespace

std::optional<Date> try_parse_date(std::string_view text) {
    text = trim(text);
    if (text.size() > 10) {
        const char sep = text[10];
        if (sep != ' ' && sep != 'T') return std::nullopt;
        std::string_view time = text.substr(11);
        if (time != "00:00:00" && time != "00:00" && time != "00:00:00Z") return std::nullopt;
        text = text.substr(0, 10);
    }
    if (text.size() != 7 && text.size() != 10) return std::nullopt;
    if (text[4] != '-') return std::nullopt;
    if (!all_digits(text.substr(0, 4)) || !all_digits(text.substr(5, 2))) return std::nullopt;
    const int year = static_cast<int>(parse_integer(text.substr(0, 4)));
    const auto month = static_cast<unsigned>(parse_integer(text.substr(5, 2)));
    unsigned day = 1;
    if (text.size() == 10) {
        if (text[7] != '-' || !all_digits(text.substr(8, 2))) return std::nullopt;
        day = static_cast<unsigned>(parse_integer(text.substr(8, 2)));
    }
    if (!valid_ymd(year, month, day)) return std::nullopt;
    const std::chrono::sys_days days{std::chrono::year{year} / std::chrono::month{month} /
                                     std::chrono::day{day}};
    return Date{static_cast<std::int32_t>(days.time_since_epoch().count())};
}

Date parse_date(std::string_view text) {
    if (auto d = try_parse_date(text)) return *d;
    throw Error(ErrorKind::InvalidArgument, "invalid date '" + std::string(text) + "'");
}

std::string format_date(Date date) {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{date.days}}};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

namespace {

class FieldReader {
public:
    FieldReader(std::size_t ordinal, ParseMode mode) : ordinal_(ordinal), mode_(mode) {}

    [[noreturn]] void fail(const std::string& path, const std::string& what) const {
        std::string msg = "field '" + path + "': " + what;
        if (ordinal_ != 0) msg += " (record " + std::to_string(ordinal_) + ")";
        throw Error(ErrorKind::SchemaViolation, msg);
    }

    // Null when the field is absent and lenient mode allows substitution.
    const json* member(const json& obj, const std::string& key, const std::string& path) const {
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (mode_ == ParseMode::Lenient) return nullptr;
            fail(path, "missing");
        }
        return &*it;
    }

    const json* object(const json& obj, const std::string& key, const std::string& path) const {
        const json* v = member(obj, key, path);
        if (v && !v->is_object()) fail(path, "expected object");
        return v;
    }

    double number(const json& obj, const std::string& key, const std::string& path,
                  bool non_negative) const {
        const json* v = member(obj, key, path);
        if (!v) return 0.0;
        double value = 0.0;
        if (v->is_boolean()) {
            value = v->get<bool>() ? 1.0 : 0.0;
        } else if (v->is_number()) {
            value = v->get<double>();
        } else {
            fail(path, "expected number");
        }
        if (!std::isfinite(value)) fail(path, "non-finite number");
        if (non_negative && value < 0) fail(path, "negative count");
        return value;
    }

    std::string string(const json& obj, const std::string& key, const std::string& path) const {
        const json* v = member(obj, key, path);
        if (!v) return {};
        if (v->is_null()) return {};
        if (!v->is_string()) fail(path, "expected string");
        return v->get<std::string>();
    }

    std::vector<std::string> strings(const json& obj, const std::string& key,
                                     const std::string& path) const {
        const json* v = member(obj, key, path);
        std::vector<std::string> out;
        if (!v || v->is_null()) return out;
        if (!v->is_array()) fail(path, "expected array");
        out.reserve(v->size());
        for (const auto& item : *v) {
            if (!item.is_string()) fail(path, "expected array of strings");
            out.push_back(item.get<std::string>());
        }
        return out;
    }

    template <std::size_t N>
    void counts(const json& obj, const std::string& key, const std::string& path,
                std::array<double, N>& out) const {
        const json* v = member(obj, key, path);
        if (!v) {
            out.fill(0.0);
            return;
        }
        if (!v->is_array()) fail(path, "expected array");
        if (v->size() != N) {
            fail(path, "arity " + std::to_string(v->size()) + ", expected " + std::to_string(N));
        }
        for (std::size_t i = 0; i < N; ++i) {
            const json& item = (*v)[i];
            if (!item.is_number()) fail(path + "[" + std::to_string(i) + "]", "expected number");
            const double value = item.get<double>();
            if (!std::isfinite(value) || value < 0) {
                fail(path + "[" + std::to_string(i) + "]", "expected non-negative count");
            }
            out[i] = value;
        }
    }

private:
    std::size_t ordinal_;
    ParseMode mode_;
};

const json& empty_object() {
    static const json obj = json::object();
    return obj;
}

}  // namespace

RawSampleRecord parse_record(std::string_view line, std::size_t ordinal, ParseMode mode) {
    json doc;
    try {
        doc = json::parse(line.begin(), line.end());
    } catch (const json::parse_error& e) {
        std::string msg = e.what();
        if (ordinal != 0) msg += " (record " + std::to_string(ordinal) + ")";
        throw Error(ErrorKind::MalformedJson, msg);
    }
    FieldReader f(ordinal, mode);
    if (!doc.is_object()) f.fail("$", "expected object");

    RawSampleRecord r;

    if (const json* appeared = f.member(doc, "appeared", "appeared")) {
        if (!appeared->is_string()) f.fail("appeared", "expected string");
        r.appeared_text = appeared->get<std::string>();
        auto date = try_parse_date(r.appeared_text);
        if (!date) f.fail("appeared", "invalid date '" + r.appeared_text + "'");
        r.appeared = *date;
    } else {
        r.appeared_text = "1970-01";
    }

    if (const json* label = f.member(doc, "label", "label")) {
        if (!label->is_number_integer() && !label->is_number_float()) f.fail("label", "expected integer");
        const double value = label->get<double>();
        if (value != -1.0 && value != 0.0 && value != 1.0) f.fail("label", "must be -1, 0 or 1");
        r.label = static_cast<int>(value);
    }

    if (auto it = doc.find("avclass"); it != doc.end() && !it->is_null()) {
        if (!it->is_string()) f.fail("avclass", "expected string or null");
        std::string family = it->get<std::string>();
        if (family.find_first_of(",\"\r\n") != std::string::npos) {
            f.fail("avclass", "contains a delimiter character");
        }
        if (family == "-") f.fail("avclass", "'-' is reserved as the absent-family sentinel");
        if (!family.empty()) r.avclass = std::move(family);
    }

    f.counts(doc, "histogram", "histogram", r.histogram);
    f.counts(doc, "byteentropy", "byteentropy", r.byteentropy);

    const json* strings = f.object(doc, "strings", "strings");
    const json& s = strings ? *strings : empty_object();
    r.strings.numstrings = f.number(s, "numstrings", "strings.numstrings", true);
    r.strings.avlength = f.number(s, "avlength", "strings.avlength", true);
    f.counts(s, "printabledist", "strings.printabledist", r.strings.printabledist);
    r.strings.printables = f.number(s, "printables", "strings.printables", true);
    r.strings.entropy = f.number(s, "entropy", "strings.entropy", true);
    r.strings.paths = f.number(s, "paths", "strings.paths", true);
    r.strings.urls = f.number(s, "urls", "strings.urls", true);
    r.strings.registry = f.number(s, "registry", "strings.registry", true);
    r.strings.mz = f.number(s, "MZ", "strings.MZ", true);

    const json* general = f.object(doc, "general", "general");
    const json& g = general ? *general : empty_object();
    r.general.size = f.number(g, "size", "general.size", true);
    r.general.vsize = f.number(g, "vsize", "general.vsize", true);
    r.general.has_debug = f.number(g, "has_debug", "general.has_debug", true);
    r.general.exports = f.number(g, "exports", "general.exports", true);
    r.general.imports = f.number(g, "imports", "general.imports", true);
    r.general.has_relocations = f.number(g, "has_relocations", "general.has_relocations", true);
    r.general.has_resources = f.number(g, "has_resources", "general.has_resources", true);
    r.general.has_signature = f.number(g, "has_signature", "general.has_signature", true);
    r.general.has_tls = f.number(g, "has_tls", "general.has_tls", true);
    r.general.symbols = f.number(g, "symbols", "general.symbols", true);

    const json* header = f.object(doc, "header", "header");
    const json& h = header ? *header : empty_object();
    const json* coff = f.object(h, "coff", "header.coff");
    const json& c = coff ? *coff : empty_object();
    r.coff.timestamp = f.number(c, "timestamp", "header.coff.timestamp", false);
    r.coff.machine = f.string(c, "machine", "header.coff.machine");
    r.coff.characteristics = f.strings(c, "characteristics", "header.coff.characteristics");

    const json* optional = f.object(h, "optional", "header.optional");
    const json& o = optional ? *optional : empty_object();
    auto& oh = r.optional;
    oh.subsystem = f.string(o, "subsystem", "header.optional.subsystem");
    oh.dll_characteristics = f.strings(o, "dll_characteristics", "header.optional.dll_characteristics");
    oh.magic = f.string(o, "magic", "header.optional.magic");
    const std::string op = "header.optional.";
    oh.major_image_version = f.number(o, "major_image_version", op + "major_image_version", false);
    oh.minor_image_version = f.number(o, "minor_image_version", op + "minor_image_version", false);
    oh.major_linker_version = f.number(o, "major_linker_version", op + "major_linker_version", false);
    oh.minor_linker_version = f.number(o, "minor_linker_version", op + "minor_linker_version", false);
    oh.major_operating_system_version =
        f.number(o, "major_operating_system_version", op + "major_operating_system_version", false);
    oh.minor_operating_system_version =
        f.number(o, "minor_operating_system_version", op + "minor_operating_system_version", false);
    oh.major_subsystem_version = f.number(o, "major_subsystem_version", op + "major_subsystem_version", false);
    oh.minor_subsystem_version = f.number(o, "minor_subsystem_version", op + "minor_subsystem_version", false);
    oh.sizeof_code = f.number(o, "sizeof_code", op + "sizeof_code", false);
    oh.sizeof_headers = f.number(o, "sizeof_headers", op + "sizeof_headers", false);
    oh.sizeof_heap_commit = f.number(o, "sizeof_heap_commit", op + "sizeof_heap_commit", false);

    const json* section = f.object(doc, "section", "section");
    const json& sec = section ? *section : empty_object();
    r.entry_section = f.string(sec, "entry", "section.entry");
    if (const json* list = f.member(sec, "sections", "section.sections")) {
        if (!list->is_array()) f.fail("section.sections", "expected array");
        r.sections.reserve(list->size());
        for (std::size_t i = 0; i < list->size(); ++i) {
            const json& item = (*list)[i];
            const std::string path = "section.sections[" + std::to_string(i) + "]";
            if (!item.is_object()) f.fail(path, "expected object");
            SectionInfo info;
            info.name = f.string(item, "name", path + ".name");
            info.size = f.number(item, "size", path + ".size", true);
            info.entropy = f.number(item, "entropy", path + ".entropy", true);
            info.vsize = f.number(item, "vsize", path + ".vsize", true);
            info.props = f.strings(item, "props", path + ".props");
            r.sections.push_back(std::move(info));
        }
    }

    if (const json* imports = f.member(doc, "imports", "imports")) {
        if (!imports->is_object()) f.fail("imports", "expected object");
        for (const auto& [dll, funcs] : imports->items()) {
            const std::string path = "imports." + dll;
            if (!funcs.is_array()) f.fail(path, "expected array");
            std::vector<std::string> names;
            names.reserve(funcs.size());
            for (const auto& fn : funcs) {
                if (!fn.is_string()) f.fail(path, "expected array of strings");
                names.push_back(fn.get<std::string>());
            }
            r.imports.emplace(dll, std::move(names));
        }
    }
    r.exports = f.strings(doc, "exports", "exports");
    return r;
}

namespace {

json number_json(double v) {
    if (v == std::floor(v) && std::fabs(v) < 9e15) return json(static_cast<std::int64_t>(v));
    return json(v);
}

template <std::size_t N>
json counts_json(const std::array<double, N>& values) {
    json arr = json::array();
    for (double v : values) arr.push_back(number_json(v));
    return arr;
}

}  // namespace

std::string serialize_record(const RawSampleRecord& r) {
    json doc;
    doc["appeared"] = r.appeared_text;
    doc["label"] = r.label;
    doc["avclass"] = r.avclass ? json(*r.avclass) : json(nullptr);
    doc["histogram"] = counts_json(r.histogram);
    doc["byteentropy"] = counts_json(r.byteentropy);
    doc["strings"] = {
        {"numstrings", number_json(r.strings.numstrings)},
        {"avlength", number_json(r.strings.avlength)},
        {"printabledist", counts_json(r.strings.printabledist)},
        {"printables", number_json(r.strings.printables)},
        {"entropy", number_json(r.strings.entropy)},
        {"paths", number_json(r.strings.paths)},
        {"urls", number_json(r.strings.urls)},
        {"registry", number_json(r.strings.registry)},
        {"MZ", number_json(r.strings.mz)},
    };
    const auto& g = r.general;
    doc["general"] = {
        {"size", number_json(g.size)},
        {"vsize", number_json(g.vsize)},
        {"has_debug", number_json(g.has_debug)},
        {"exports", number_json(g.exports)},
        {"imports", number_json(g.imports)},
        {"has_relocations", number_json(g.has_relocations)},
        {"has_resources", number_json(g.has_resources)},
        {"has_signature", number_json(g.has_signature)},
        {"has_tls", number_json(g.has_tls)},
        {"symbols", number_json(g.symbols)},
    };
    const auto& o = r.optional;
    doc["header"] = {
        {"coff",
         {{"timestamp", number_json(r.coff.timestamp)},
          {"machine", r.coff.machine},
          {"characteristics", r.coff.characteristics}}},
        {"optional",
         {{"subsystem", o.subsystem},
          {"dll_characteristics", o.dll_characteristics},
          {"magic", o.magic},
          {"major_image_version", number_json(o.major_image_version)},
          {"minor_image_version", number_json(o.minor_image_version)},
          {"major_linker_version", number_json(o.major_linker_version)},
          {"minor_linker_version", number_json(o.minor_linker_version)},
          {"major_operating_system_version", number_json(o.major_operating_system_version)},
          {"minor_operating_system_version", number_json(o.minor_operating_system_version)},
          {"major_subsystem_version", number_json(o.major_subsystem_version)},
          {"minor_subsystem_version", number_json(o.minor_subsystem_version)},
          {"sizeof_code", number_json(o.sizeof_code)},
          {"sizeof_headers", number_json(o.sizeof_headers)},
          {"sizeof_heap_commit", number_json(o.sizeof_heap_commit)}}},
    };
    json sections = json::array();
    for (const auto& s : r.sections) {
        sections.push_back({{"name", s.name},
                            {"size", number_json(s.size)},
                            {"entropy", number_json(s.entropy)},
                            {"vsize", number_json(s.vsize)},
                            {"props", s.props}});
    }
    doc["section"] = {{"entry", r.entry_section}, {"sections", std::move(sections)}};
    json imports = json::object();
    for (const auto& [dll, funcs] : r.imports) imports[dll] = funcs;
    doc["imports"] = std::move(imports);
    doc["exports"] = r.exports;
    return doc.dump();
}

std::string avclass_or_sentinel(const RawSampleRecord& record) {
    return record.avclass ? *record.avclass : std::string("-");
}

LineReader::LineReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorKind::IoFailure, "cannot open " + path);
}

bool LineReader::next(std::string& line, std::size_t& line_number) {
    while (std::getline(in_, line)) {
        ++line_number_;
        if (!trim(line).empty()) {
            line_number = line_number_;
            return true;
        }
    }
    if (in_.bad()) throw Error(ErrorKind::IoFailure, "read failed: " + path_);
    return false;
}

RecordStream::RecordStream(const std::string& path, std::size_t chunk_size, ParseMode mode)
    : reader_(path), chunk_size_(chunk_size), mode_(mode) {
    if (chunk_size == 0) throw Error(ErrorKind::InvalidArgument, "chunk_size must be positive");
}

bool RecordStream::next_chunk(std::vector<RawSampleRecord>& chunk) {
    chunk.clear();
    std::string line;
    std::size_t line_number = 0;
    while (chunk.size() < chunk_size_ && reader_.next(line, line_number)) {
        try {
            chunk.push_back(parse_record(line, 0, mode_));
        } catch (const Error& e) {
            throw Error(e.kind(), reader_.path() + ": line " + std::to_string(line_number) + ": " +
                                      e.message());
        }
    }
    return !chunk.empty();
}

std::vector<std::vector<RawSampleRecord>> stream_records(const std::string& path,
                                                         std::size_t chunk_size, ParseMode mode) {
    RecordStream stream(path, chunk_size, mode);
    std::vector<std::vector<RawSampleRecord>> chunks;
    std::vector<RawSampleRecord> chunk;
    while (stream.next_chunk(chunk)) chunks.push_back(std::move(chunk));
    return chunks;
}

MetadataIndex build_metadata_index(const FragmentManifest& manifest) {
    MetadataIndex index;
    const auto& layout = feature_layout();
    for (const auto& frag : manifest.fragments) {
        const auto path = manifest.path_of(frag);
        if (!std::filesystem::exists(path)) {
            throw Error(ErrorKind::MissingFragment, "fragment " + std::to_string(frag.id) +
                                                        " missing at " + path);
        }
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::MissingFragment, "cannot open " + path);
        std::string line;
        if (!std::getline(in, line) || line != layout.header_line()) {
            throw Error(ErrorKind::InconsistentManifest, "fragment " + path + " has an unexpected header");
        }
        std::uint32_t row = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto first = line.find(',');
            const auto last = line.rfind(',');
            const auto second_last = line.rfind(',', last - 1);
            if (first == std::string::npos || last == first || second_last == std::string::npos) {
                throw Error(ErrorKind::InconsistentManifest,
                            path + ": malformed row " + std::to_string(row));
            }
            MetadataRow m;
            m.appeared_text = line.substr(0, first);
            m.appeared = parse_date(m.appeared_text);
            m.label = static_cast<int>(
                parse_integer(std::string_view(line).substr(second_last + 1, last - second_last - 1)));
            m.avclass = line.substr(last + 1);
            m.index = row++;
            m.fragment = frag.id;
            index.rows.push_back(std::move(m));
        }
        if (row != frag.rows) {
            throw Error(ErrorKind::InconsistentManifest,
                        "fragment " + std::to_string(frag.id) + " holds " + std::to_string(row) +
                            " rows, manifest says " + std::to_string(frag.rows));
        }
    }
    return index;
}

std::string metadata_index_to_csv(const MetadataIndex& index) {
    std::string out(kMetadataHeader);
    out += '\n';
    for (const auto& r : index.rows) {
        out += r.appeared_text;
        out += ',';
        out += std::to_string(r.label);
        out += ',';
        out += r.avclass;
        out += ',';
        out += std::to_string(r.index);
        out += ',';
        out += std::to_string(r.fragment);
        out += '\n';
    }
    return out;
}

void write_metadata_index(const MetadataIndex& index, const std::string& path) {
    write_file_atomic(path, metadata_index_to_csv(index));
}

MetadataIndex read_metadata_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kMetadataHeader) {
        throw Error(ErrorKind::SchemaViolation, path + ": expected header '" +
                                                    std::string(kMetadataHeader) + "'");
    }
    MetadataIndex index;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) continue;
        const auto fields = split(trim(line), ',');
        if (fields.size() != 5) {
            throw Error(ErrorKind::SchemaViolation,
                        path + ":" + std::to_string(line_number) + ": expected 5 fields");
        }
        MetadataRow r;
        r.appeared_text = std::string(fields[0]);
        r.appeared = parse_date(fields[0]);
        r.label = static_cast<int>(parse_integer(fields[1]));
        r.avclass = std::string(fields[2]);
        r.index = static_cast<std::uint32_t>(parse_integer(fields[3]));
        r.fragment = static_cast<std::uint32_t>(parse_integer(fields[4]));
        index.rows.push_back(std::move(r));
    }
    return index;
}

}  // namespace malbench
