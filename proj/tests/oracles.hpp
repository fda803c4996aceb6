#pragma once

// Reference computations written independently of the library, used by the
// unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

/// Rebuilds the feature header by replaying the reference loops with
/// their own copy of the vocabularies. Returns the ordered names.
inline std::vector<std::string> reference_feature_names() {
    const std::vector<std::string> machines = {"AMD64", "ARM", "ARMNT", "I386", "IA64", "MIPS16",
                                               "MIPSFPU", "POWERPC", "R4000", "SH3", "SH4", "THUMB"};
    const std::vector<std::string> coff_chars = {
        "AGGRESSIVE_WS_TRIM", "BYTES_REVERSED_HI", "BYTES_REVERSED_LO", "CHARA_32BIT_MACHINE", "DEBUG_STRIPPED",
        "DLL", "EXECUTABLE_IMAGE", "LARGE_ADDRESS_AWARE", "LINE_NUMS_STRIPPED", "LOCAL_SYMS_STRIPPED",
        "NET_RUN_FROM_SWAP", "RELOCS_STRIPPED", "REMOVABLE_RUN_FROM_SWAP", "SYSTEM", "UP_SYSTEM_ONLY"};
    const std::vector<std::string> subsystems = {"EFI_APPLICATION", "EFI_BOOT_SERVICE_DRIVER", "EFI_RUNTIME_DRIVER",
                                                 "NATIVE", "POSIX_CUI", "UNKNOWN", "WINDOWS_BOOT_APPLICATION",
                                                 "WINDOWS_CE_GUI", "WINDOWS_CUI", "WINDOWS_GUI", "XBOX"};
    const std::vector<std::string> dll_chars = {"APPCONTAINER", "DYNAMIC_BASE", "FORCE_INTEGRITY", "GUARD_CF",
                                                "HIGH_ENTROPY_VA", "NO_BIND", "NO_ISOLATION", "NO_SEH",
                                                "NX_COMPAT", "TERMINAL_SERVER_AWARE", "WDM_DRIVER"};
    const std::vector<std::string> magics = {"PE32", "PE32_PLUS"};
    const std::vector<std::string> props = {
        "ALIGN_1024BYTES", "ALIGN_128BYTES", "ALIGN_16BYTES", "ALIGN_1BYTES", "ALIGN_2048BYTES", "ALIGN_256BYTES",
        "ALIGN_2BYTES", "ALIGN_32BYTES", "ALIGN_4096BYTES", "ALIGN_4BYTES", "ALIGN_512BYTES", "ALIGN_64BYTES",
        "ALIGN_8192BYTES", "ALIGN_8BYTES", "CNT_CODE", "CNT_INITIALIZED_DATA", "CNT_UNINITIALIZED_DATA", "GPREL",
        "LNK_COMDAT", "LNK_INFO", "LNK_NRELOC_OVFL", "LNK_OTHER", "LNK_REMOVE", "MEM_16BIT", "MEM_DISCARDABLE",
        "MEM_EXECUTE", "MEM_LOCKED", "MEM_NOT_CACHED", "MEM_NOT_PAGED", "MEM_PRELOAD", "MEM_READ", "MEM_SHARED",
        "MEM_WRITE", "TYPE_NO_PAD"};

    std::vector<std::string> h;
    for (int i = 0; i < 256; ++i) h.push_back("histogram_" + std::to_string(i));
    for (int i = 0; i < 256; ++i) h.push_back("byteentropy_" + std::to_string(i));
    h.push_back("strings_num");
    h.push_back("strings_avlength");
    for (int i = 0; i < 96; ++i) h.push_back("strings_printabledist_" + std::to_string(i));
    for (const char* s : {"strings_printables", "strings_entropy", "strings_paths", "strings_urls",
                          "strings_registry", "strings_MZ"})
        h.push_back(s);
    for (const char* s : {"general_size", "general_vsize", "general_has_debug", "general_exports", "general_imports",
                          "general_has_relocations", "general_has_resources", "general_has_signature",
                          "general_has_tls", "general_symbols"})
        h.push_back(s);
    h.push_back("header_coff_timestamp");
    for (const auto& m : machines) h.push_back("header_coff_machine_" + m);
    for (const auto& c : coff_chars) h.push_back("header_coff_" + c);
    for (const auto& s : subsystems) h.push_back("header_opt_subsystem_" + s);
    for (const auto& c : dll_chars) h.push_back("header_opt_dll_characteristic_" + c);
    for (const auto& m : magics) h.push_back("header_opt_" + m);
    for (const char* s : {"major_image_version", "minor_image_version", "major_linker_version",
                          "minor_linker_version", "major_operating_system_version",
                          "minor_operating_system_version", "major_subsystem_version", "minor_subsystem_version",
                          "sizeof_code", "sizeof_headers", "sizeof_heap_commit"})
        h.push_back(std::string("header_opt_") + s);
    for (int i = 0; i < 50; ++i) {
        h.push_back("sections_h" + std::to_string(i) + "_size");
        h.push_back("sections_h" + std::to_string(i) + "_entropy");
        h.push_back("sections_h" + std::to_string(i) + "_vsize");
    }
    for (const auto& p : props) h.push_back("sections_ENTRY_" + p);
    for (int i = 0; i < 128; ++i) h.push_back("imports_dll_h" + std::to_string(i) + "_imported");
    for (int i = 0; i < 256; ++i) h.push_back("imports_fun_h" + std::to_string(i) + "_imported");
    for (int i = 0; i < 128; ++i) h.push_back("exports_h" + std::to_string(i));
    return h;
}

inline bool is_format_agnostic(const std::string& name) {
    return name.starts_with("histogram") || name.starts_with("byteentropy") || name.starts_with("strings");
}

/// Area under the ROC curve as P(s+ > s-) + P(s+ == s-)/2 over all pairs.
inline double all_pairs_auc(const std::vector<int>& y, const std::vector<double>& s) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] == 1) continue;
            pairs += 1;
            if (s[i] > s[j]) wins += 1;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

/// (fpr, tpr) at threshold t by direct recount.
inline std::pair<double, double> rates_at(const std::vector<int>& y, const std::vector<double>& s, double t) {
    double tp = 0, fp = 0, p = 0, n = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        (y[i] == 1 ? p : n) += 1;
        if (s[i] >= t) (y[i] == 1 ? tp : fp) += 1;
    }
    return {fp / n, tp / p};
}

/// Scans thresholds from high to low and returns (tpr, fpr) of the first
/// one whose FPR reaches the target; the empty-prediction point comes first.
inline std::pair<double, double> scan_recall_at_fpr(const std::vector<int>& y, const std::vector<double>& s,
                                                    double target) {
    std::vector<double> thresholds(s.begin(), s.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    if (target <= 0) return {0.0, 0.0};
    for (double t : thresholds) {
        const auto [fpr, tpr] = rates_at(y, s, t);
        if (fpr >= target) return {tpr, fpr};
    }
    return {1.0, 1.0};
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (static_cast<double>(i + j) / 2.0) + 1.0;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

/// Two-pass sample covariance based Pearson coefficient.
inline double covariance_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double cxy = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        cxy += (x[i] - mx) * (y[i] - my) / (n - 1);
        vx += (x[i] - mx) * (x[i] - mx) / (n - 1);
        vy += (y[i] - my) * (y[i] - my) / (n - 1);
    }
    return cxy / std::sqrt(vx) / std::sqrt(vy);
}

}  // namespace oracle
