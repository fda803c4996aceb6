#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace malbench {

enum class ErrorKind {
    MalformedJson,
    SchemaViolation,
    IoFailure,
    MissingFragment,
    InconsistentManifest,
    EmptyPool,
    InsufficientPool,
    DanglingRowId,
    DegenerateLabels,
    NonFiniteFeature,
    WidthMismatch,
    Unsupported,
    VersionMismatch,
    CorruptModel,
    LengthMismatch,
    Empty,
    NoPositives,
    SingleClass,
    ZeroVariance,
    NonDoublingLevels,
    DegenerateX,
    InvalidLevels,
    MissingColumn,
    InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix, for re-wrapping with context.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

/// 64-bit FNV-1a over raw bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string to_hex(std::uint64_t value);

/// SplitMix64. Portable and fully specified, so draws agree across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Unbiased integer in [0, bound) by rejection; bound must be > 0.
    std::uint64_t bounded(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (one value per call).
    double normal() noexcept;

private:
    std::uint64_t state_;
};

/// Derives an independent stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) noexcept;

/// Shortest text that reads back to the identical double; integral values
/// print without exponent or fraction.
std::string format_number(double value);
void append_number(std::string& out, double value);

/// Strict full-string parse of a double; throws InvalidArgument.
double parse_number(std::string_view text);
long long parse_integer(std::string_view text);

/// Worker count: MALBENCH_WORKERS if set, else hardware concurrency.
unsigned default_workers();

/// Runs body(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any body is rethrown after all threads join.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body);

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);
std::string read_file(const std::string& path);

}  // namespace malbench
