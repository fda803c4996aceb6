#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "malbench/ingest.hpp"
#include "malbench/matrix.hpp"
#include "malbench/synth.hpp"
#include "malbench/vectorize.hpp"

namespace testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string pattern = (std::filesystem::temp_directory_path() / "malbench-XXXXXX").string();
        if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline malbench::RawSampleRecord zero_record(std::string appeared = "2018-03", int label = 0) {
    malbench::RawSampleRecord r;
    r.appeared_text = appeared;
    r.appeared = malbench::parse_date(appeared);
    r.label = label;
    return r;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
}

inline std::string slurp(const std::string& path) { return malbench::read_file(path); }

/// Synthetic corpus vectorized into fragments under dir/frags.
inline malbench::FragmentManifest synth_fragments(const TempDir& dir, const malbench::SynthConfig& cfg,
                                                  std::size_t fragment_size = 50000) {
    const std::string corpus = dir.file("corpus.jsonl");
    malbench::generate_corpus(cfg, corpus);
    malbench::VectorizeOptions opts;
    opts.fragment_size = fragment_size;
    return malbench::vectorize_corpus({corpus}, dir.file("frags"), opts);
}

/// Two Gaussian blobs shifted by +-2 on the first `informative` columns;
/// points within unit distance of the separating hyperplane sum(x_inf) = 0
/// are redrawn, so the problem is linearly separable with a margin.
struct Problem {
    malbench::Matrix x;
    std::vector<int> y;
};

inline Problem separable_problem(std::size_t n, std::size_t width, std::size_t informative, std::uint64_t seed) {
    malbench::SplitMix64 rng(seed);
    Problem p{malbench::Matrix(n, width), std::vector<int>(n)};
    const double norm = std::sqrt(static_cast<double>(informative));
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(rng.bounded(2));
        const double shift = label == 1 ? 2.0 : -2.0;
        for (;;) {
            double projection = 0;
            for (std::size_t j = 0; j < width; ++j) {
                const double v = rng.normal() + (j < informative ? shift : 0.0);
                p.x(i, j) = v;
                if (j < informative) projection += v;
            }
            if (shift * projection / norm >= 1.0) break;
        }
        p.y[i] = label;
    }
    return p;
}

}  // namespace testing
