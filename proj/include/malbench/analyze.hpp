#pragma once

// Observations (the results CSV) and their statistical post-processing.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace malbench {

inline constexpr std::string_view kResultsHeader =
    "question,algorithm,feature_set,train_set_size,test_set_size,test_set_ratio,perf_measure,performance,other_info,seed";

struct Observation {
    int question = 1;
    std::string algorithm;
    std::string feature_set;
    std::uint64_t train_set_size = 0;
    std::uint64_t test_set_size = 0;
    std::string test_set_ratio;  // "1:K"
    std::string perf_measure;    // accuracy | real-life | AUC
    std::optional<double> performance;
    std::optional<double> other_info;  // achieved FPR on real-life rows
    std::uint64_t seed = 0;

    bool operator==(const Observation&) const = default;
};

std::string format_observation(const Observation& obs);
std::string observations_to_csv(const std::vector<Observation>& rows);
void write_observations(const std::vector<Observation>& rows, const std::string& path);

/// Columns are located by header name, so extra columns (e.g. a leading
/// index) are ignored. Empty cells and NaN read as absent values.
std::vector<Observation> parse_observations(std::string_view text);
std::vector<Observation> read_observations(const std::string& path);

/// Simple headered CSV table. Cells holding ',' '"' or newlines are quoted.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Throws MissingColumn.
    std::size_t column(std::string_view name) const;
    std::string to_csv() const;
    static Table parse(std::string_view text);
};

Table read_table(const std::string& path);
Table observations_table(const std::vector<Observation>& rows);

double pearson(std::span<const double> x, std::span<const double> y);

struct Correlation {
    std::string algorithm;
    double r = 0.0;
    std::size_t n = 0;
};

/// One r per algorithm between train_set_size and performance, pooling
/// feature sets and seeds. Rows without a performance value are skipped.
std::vector<Correlation> correlation_table(const std::vector<Observation>& obs, int question,
                                           std::string_view perf_measure);

enum class DeltaMode { Absolute, Relative };

struct SensitivityPoint {
    double level = 0.0;  // smaller size of the doubled pair
    double delta = 0.0;

    bool operator==(const SensitivityPoint&) const = default;
};

/// Series sorted by size, each size twice the previous. Throws NonDoublingLevels.
std::vector<SensitivityPoint> oat_sensitivities(const std::vector<std::pair<double, double>>& series,
                                                DeltaMode mode = DeltaMode::Absolute);

struct SliceSensitivity {
    std::string algorithm;
    std::string feature_set;
    std::uint64_t seed = 0;
    SensitivityPoint point;
};

/// Per-doubling deltas computed independently within every
/// (algorithm, feature_set, seed) slice, then concatenated.
std::vector<SliceSensitivity> repeated_oat(const std::vector<Observation>& obs, int question,
                                           std::string_view perf_measure, DeltaMode mode = DeltaMode::Absolute);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Ordinary least squares. Throws DegenerateX with fewer than two distinct x.
LinearFit fit_linear(const std::vector<std::pair<double, double>>& points);

}  // namespace malbench
