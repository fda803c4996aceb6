#include "malbench/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace malbench {

namespace {

// Signal features carry the class shift; everything else is shared noise.
constexpr std::size_t kSignalBins = 16;

const std::vector<std::string> kSectionNames = {".text", ".data", ".rdata", ".rsrc", ".reloc", ".bss",
                                                ".idata", ".tls", ".pdata", "UPX0", "UPX1", ".packed"};
const std::vector<std::string> kDlls = {"KERNEL32.dll", "USER32.dll", "ADVAPI32.dll", "GDI32.dll", "SHELL32.dll",
                                        "ole32.dll", "WS2_32.dll", "WININET.dll", "msvcrt.dll", "ntdll.dll",
                                        "COMCTL32.dll", "CRYPT32.dll"};
const std::vector<std::string> kFunctions = {
    "ExitProcess", "GetProcAddress", "LoadLibraryA", "VirtualAlloc", "VirtualProtect", "CreateFileW",
    "WriteFile", "ReadFile", "RegOpenKeyExW", "RegSetValueExW", "MessageBoxW", "CreateThread",
    "InternetOpenA", "send", "recv", "GetModuleHandleW", "Sleep", "CreateProcessW", "WriteProcessMemory",
    "CryptEncrypt", "GetTickCount", "SetWindowsHookExA", "ShellExecuteW", "CloseHandle"};
const std::vector<std::string> kExports = {"DllMain", "DllRegisterServer", "DllUnregisterServer", "ServiceMain",
                                           "Start", "Run", "Install", "GetVersion"};
const std::vector<std::string> kProps = {"CNT_CODE", "CNT_INITIALIZED_DATA", "CNT_UNINITIALIZED_DATA",
                                         "MEM_EXECUTE", "MEM_READ", "MEM_WRITE", "MEM_DISCARDABLE",
                                         "ALIGN_16BYTES"};

struct Months {
    int first_year, first_month, count;

    std::string at(int k) const {
        const int m = first_month - 1 + k;
        const int year = first_year + m / 12;
        const int month = m % 12 + 1;
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
        return buf;
    }
};

Months month_range(const std::string& first, const std::string& last) {
    auto ym = [](const std::string& s) {
        const Date d = parse_date(s);
        const std::string text = format_date(d);
        return std::pair{static_cast<int>(parse_integer(text.substr(0, 4))),
                         static_cast<int>(parse_integer(text.substr(5, 2)))};
    };
    const auto [y0, m0] = ym(first);
    const auto [y1, m1] = ym(last);
    return {y0, m0, (y1 - y0) * 12 + (m1 - m0) + 1};
}

// Picks from a vocabulary whose lower half is favoured by malware and upper
// half by benign samples, with the tilt growing with `skew`.
const std::string& skewed_pick(const std::vector<std::string>& vocab, bool malware, double skew, SplitMix64& rng) {
    const std::size_t half = vocab.size() / 2;
    const bool tilt = rng.uniform() < skew * 0.5;
    if (tilt) {
        const std::size_t k = rng.bounded(half);
        return vocab[malware ? k : half + k];
    }
    return vocab[rng.bounded(vocab.size())];
}

double count_value(double mean, double sd, SplitMix64& rng) { return std::max(0.0, std::round(mean + sd * rng.normal())); }

}  // namespace

std::vector<Family> SynthConfig::default_families(std::size_t count) {
    std::vector<Family> out;
    double total = 0;
    for (std::size_t k = 0; k < count; ++k) total += 1.0 / static_cast<double>(k + 1);
    for (std::size_t k = 0; k < count; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "fam%02zu", k);
        out.push_back({name, 1.0 / static_cast<double>(k + 1) / total});
    }
    return out;
}

void SynthConfig::validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, "synth: " + what); };
    if (!(malware_fraction > 0 && malware_fraction < 1)) bad("malware_fraction must lie in (0,1)");
    if (families.empty()) bad("no families");
    double total = 0;
    for (const auto& f : families) {
        if (f.weight < 0) bad("negative family weight");
        if (f.name.empty() || f.name == "-" || f.name.find_first_of(",\"\r\n") != std::string::npos) {
            bad("invalid family name '" + f.name + "'");
        }
        total += f.weight;
    }
    if (std::fabs(total - 1.0) > 1e-9) bad("family weights must sum to 1");
    if (!(separability >= 0) || !std::isfinite(separability)) bad("separability must be finite and >= 0");
    if (n_samples < 2 * families.size()) bad("n_samples must be at least twice the family count");
    const Months m = month_range(first_month, last_month);
    if (m.count < 2) bad("month range must span at least two months");
    // Both sides of the default split must be populated.
    const Date split = parse_date("2018-07-31");
    if (!(parse_date(first_month) < split && split < parse_date(last_month))) {
        bad("month range must straddle 2018-07-31");
    }
}

std::string SynthConfig::to_text() const {
    std::string out;
    out += "n_samples = " + std::to_string(n_samples) + "\n";
    out += "malware_fraction = " + format_number(malware_fraction) + "\n";
    out += "separability = " + format_number(separability) + "\n";
    out += "first_month = " + first_month + "\n";
    out += "last_month = " + last_month + "\n";
    out += "seed = " + std::to_string(seed) + "\n";
    out += "families = ";
    for (std::size_t i = 0; i < families.size(); ++i) {
        if (i) out += ", ";
        out += families[i].name + ":" + format_number(families[i].weight);
    }
    out += "\n";
    return out;
}

SynthConfig SynthConfig::parse(std::string_view text) {
    SynthConfig c;
    for (std::string_view raw : split(text, '\n')) {
        const std::string_view line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw Error(ErrorKind::InvalidArgument, "synth config: expected key = value");
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view v = trim(line.substr(eq + 1));
        if (key == "n_samples") c.n_samples = static_cast<std::size_t>(parse_integer(v));
        else if (key == "malware_fraction") c.malware_fraction = parse_number(v);
        else if (key == "separability") c.separability = parse_number(v);
        else if (key == "first_month") c.first_month = v;
        else if (key == "last_month") c.last_month = v;
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_integer(v));
        else if (key == "families") {
            c.families.clear();
            for (std::string_view item : split(v, ',')) {
                item = trim(item);
                const auto colon = item.rfind(':');
                if (colon == std::string_view::npos) throw Error(ErrorKind::InvalidArgument, "family needs name:weight");
                c.families.push_back({std::string(trim(item.substr(0, colon))), parse_number(item.substr(colon + 1))});
            }
        } else {
            throw Error(ErrorKind::InvalidArgument, "synth config: unknown key '" + std::string(key) + "'");
        }
    }
    return c;
}

RawSampleRecord synth_record(const SynthConfig& cfg, std::size_t i) {
    SplitMix64 rng(derive_seed(cfg.seed, "synth-record", i));
    const Months months = month_range(cfg.first_month, cfg.last_month);
    const std::size_t forced = 2 * cfg.families.size();

    RawSampleRecord r;
    int month = 0;
    if (i < forced) {
        r.label = 1;
        r.avclass = cfg.families[i / 2].name;
        month = i % 2 == 0 ? 0 : months.count - 1;
        rng.uniform();
    } else {
        r.label = rng.uniform() < cfg.malware_fraction ? 1 : 0;
        month = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(months.count)));
        if (r.label == 1) {
            double u = rng.uniform(), acc = 0;
            std::size_t f = 0;
            for (; f + 1 < cfg.families.size(); ++f) {
                acc += cfg.families[f].weight;
                if (u < acc) break;
            }
            r.avclass = cfg.families[f].name;
        }
    }
    r.appeared_text = months.at(month);
    r.appeared = parse_date(r.appeared_text);

    const bool malware = r.label == 1;
    const double shift = malware ? cfg.separability : 0.0;
    const double skew = std::tanh(cfg.separability);

    for (std::size_t b = 0; b < 256; ++b) {
        const double mean = 2000.0 + 1500.0 * std::sin(static_cast<double>(b) * 0.37);
        const double sd = 300.0;
        r.histogram[b] = count_value(mean + (b < kSignalBins ? shift * sd : 0.0), sd, rng);
    }
    for (std::size_t b = 0; b < 256; ++b) {
        const double mean = 0.5 + 0.3 * std::cos(static_cast<double>(b) * 0.11);
        const double sd = 0.05;
        r.byteentropy[b] = std::max(0.0, mean + (b < kSignalBins ? shift * sd : 0.0) + sd * rng.normal());
    }

    auto& s = r.strings;
    s.numstrings = count_value(800 + shift * 150, 150, rng);
    s.avlength = std::max(0.0, 8.0 + 2.0 * (rng.normal() + shift));
    for (auto& p : s.printabledist) p = count_value(100, 20, rng);
    s.printables = std::accumulate(s.printabledist.begin(), s.printabledist.end(), 0.0);
    s.entropy = 5.5 + 0.4 * (rng.normal() + shift);
    s.paths = count_value(3, 2, rng);
    s.urls = count_value(2, 2, rng);
    s.registry = count_value(1, 1, rng);
    s.mz = count_value(1, 1, rng);

    auto& g = r.general;
    g.size = count_value(400000 + shift * 100000, 100000, rng);
    g.vsize = count_value(500000, 120000, rng);
    g.has_debug = rng.uniform() < 0.5 ? 1 : 0;
    g.imports = count_value(80 + shift * 20, 20, rng);
    g.exports = count_value(3, 3, rng);
    g.has_relocations = rng.uniform() < 0.6 ? 1 : 0;
    g.has_resources = rng.uniform() < 0.7 ? 1 : 0;
    g.has_signature = rng.uniform() < 0.3 ? 1 : 0;
    g.has_tls = rng.uniform() < 0.2 ? 1 : 0;
    g.symbols = count_value(10, 8, rng);

    r.coff.timestamp = static_cast<double>(1262304000 + rng.bounded(283996800));
    r.coff.machine = rng.uniform() < 0.7 ? "I386" : "AMD64";
    for (const char* c : {"EXECUTABLE_IMAGE", "CHARA_32BIT_MACHINE", "LARGE_ADDRESS_AWARE", "RELOCS_STRIPPED"}) {
        if (rng.uniform() < 0.5) r.coff.characteristics.emplace_back(c);
    }
    r.optional.subsystem = rng.uniform() < 0.6 ? "WINDOWS_GUI" : "WINDOWS_CUI";
    for (const char* c : {"DYNAMIC_BASE", "NX_COMPAT", "TERMINAL_SERVER_AWARE", "HIGH_ENTROPY_VA"}) {
        if (rng.uniform() < 0.5) r.optional.dll_characteristics.emplace_back(c);
    }
    r.optional.magic = r.coff.machine == "AMD64" ? "PE32_PLUS" : "PE32";
    auto& o = r.optional;
    o.major_image_version = static_cast<double>(rng.bounded(6));
    o.minor_image_version = static_cast<double>(rng.bounded(10));
    o.major_linker_version = static_cast<double>(6 + rng.bounded(9));
    o.minor_linker_version = static_cast<double>(rng.bounded(30));
    o.major_operating_system_version = static_cast<double>(4 + rng.bounded(3));
    o.minor_operating_system_version = static_cast<double>(rng.bounded(2));
    o.major_subsystem_version = static_cast<double>(4 + rng.bounded(3));
    o.minor_subsystem_version = static_cast<double>(rng.bounded(2));
    o.sizeof_code = count_value(200000, 60000, rng);
    o.sizeof_headers = 1024;
    o.sizeof_heap_commit = 4096;

    const std::size_t n_sections = 2 + rng.bounded(5);
    for (std::size_t k = 0; k < n_sections; ++k) {
        SectionInfo sec;
        sec.name = skewed_pick(kSectionNames, malware, skew, rng);
        sec.size = count_value(50000, 20000, rng);
        sec.vsize = count_value(60000, 20000, rng);
        sec.entropy = std::clamp(5.0 + 1.5 * rng.normal(), 0.0, 8.0);
        for (const auto& p : kProps) {
            if (rng.uniform() < 0.4) sec.props.push_back(p);
        }
        r.sections.push_back(std::move(sec));
    }
    r.entry_section = r.sections.front().name;

    const std::size_t n_dlls = 1 + rng.bounded(5);
    for (std::size_t k = 0; k < n_dlls; ++k) {
        auto& functions = r.imports[skewed_pick(kDlls, malware, skew, rng)];
        const std::size_t n_fun = 1 + rng.bounded(8);
        for (std::size_t f = 0; f < n_fun; ++f) functions.push_back(skewed_pick(kFunctions, malware, skew, rng));
    }
    const std::size_t n_exports = rng.bounded(4);
    for (std::size_t k = 0; k < n_exports; ++k) r.exports.push_back(skewed_pick(kExports, malware, skew, rng));
    return r;
}

void generate_corpus(const SynthConfig& config, const std::string& out_path, unsigned workers) {
    config.validate();
    const std::string tmp = out_path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + out_path);
        constexpr std::size_t kBatch = 1024;
        std::vector<std::string> lines;
        for (std::size_t begin = 0; begin < config.n_samples; begin += kBatch) {
            const std::size_t count = std::min(kBatch, config.n_samples - begin);
            lines.assign(count, {});
            parallel_for(count, workers, [&](std::size_t k) { lines[k] = serialize_record(synth_record(config, begin + k)); });
            for (const auto& line : lines) out << line << '\n';
        }
        out.flush();
        if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + out_path);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, out_path, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot move " + tmp + " to " + out_path + ": " + ec.message());
    write_file_atomic(out_path + ".manifest", "malbench-synth 1\n" + config.to_text());
}

}  // namespace malbench
