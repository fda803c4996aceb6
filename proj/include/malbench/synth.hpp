#pragma once

// Synthetic EMBER-format corpora with tunable class separability.

#include <cstdint>
#include <string>
#include <vector>

#include "malbench/ingest.hpp"

namespace malbench {

struct Family {
    std::string name;
    double weight = 1.0;
};

struct SynthConfig {
    std::size_t n_samples = 20000;
    double malware_fraction = 0.5;
    std::vector<Family> families = default_families(20);
    /// Malware means move by this many standard deviations on the signal
    /// features; hashed-name vocabularies skew by tanh(separability).
    double separability = 1.0;
    std::string first_month = "2018-01";
    std::string last_month = "2018-12";
    std::uint64_t seed = 0;

    /// Weights decaying as 1/(k+1), normalized.
    static std::vector<Family> default_families(std::size_t count);

    /// Throws InvalidArgument.
    void validate() const;

    std::string to_text() const;
    static SynthConfig parse(std::string_view text);
};

/// Record i is a pure function of (config, i). The first 2F records are
/// malware of family i/2 alternating between the earliest and latest month,
/// so every family appears on both sides of any split inside the range.
RawSampleRecord synth_record(const SynthConfig& config, std::size_t i);

/// Writes the corpus as JSONL plus out_path + ".manifest" holding the config.
void generate_corpus(const SynthConfig& config, const std::string& out_path, unsigned workers = 1);

}  // namespace malbench
