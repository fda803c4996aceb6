#include "malbench/common.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace malbench {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MalformedJson: return "MalformedJson";
        case ErrorKind::SchemaViolation: return "SchemaViolation";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::MissingFragment: return "MissingFragment";
        case ErrorKind::InconsistentManifest: return "InconsistentManifest";
        case ErrorKind::EmptyPool: return "EmptyPool";
        case ErrorKind::InsufficientPool: return "InsufficientPool";
        case ErrorKind::DanglingRowId: return "DanglingRowId";
        case ErrorKind::DegenerateLabels: return "DegenerateLabels";
        case ErrorKind::NonFiniteFeature: return "NonFiniteFeature";
        case ErrorKind::WidthMismatch: return "WidthMismatch";
        case ErrorKind::Unsupported: return "Unsupported";
        case ErrorKind::VersionMismatch: return "VersionMismatch";
        case ErrorKind::CorruptModel: return "CorruptModel";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::Empty: return "Empty";
        case ErrorKind::NoPositives: return "NoPositives";
        case ErrorKind::SingleClass: return "SingleClass";
        case ErrorKind::ZeroVariance: return "ZeroVariance";
        case ErrorKind::NonDoublingLevels: return "NonDoublingLevels";
        case ErrorKind::DegenerateX: return "DegenerateX";
        case ErrorKind::InvalidLevels: return "InvalidLevels";
        case ErrorKind::MissingColumn: return "MissingColumn";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

std::string to_hex(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

double SplitMix64::normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) noexcept {
    SplitMix64 mix(seed ^ fnv1a64(tag));
    std::uint64_t s = mix.next();
    SplitMix64 second(s ^ (index * 0xd1b54a32d192ed03ULL));
    return second.next();
}

void append_number(std::string& out, double value) {
    char buf[64];
    if (std::isfinite(value) && value == std::floor(value) && std::fabs(value) < 1e15) {
        auto res = std::to_chars(buf, buf + sizeof(buf), static_cast<long long>(value));
        out.append(buf, res.ptr);
        return;
    }
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    out.append(buf, res.ptr);
}

std::string format_number(double value) {
    std::string out;
    append_number(out, value);
    return out;
}

double parse_number(std::string_view text) {
    text = trim(text);
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    if (!text.empty() && *begin == '+') ++begin;
    auto res = std::from_chars(begin, end, value);
    if (text.empty() || res.ec != std::errc() || res.ptr != end) {
        throw Error(ErrorKind::InvalidArgument, "not a number: '" + std::string(text) + "'");
    }
    return value;
}

long long parse_integer(std::string_view text) {
    text = trim(text);
    long long value = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw Error(ErrorKind::InvalidArgument, "not an integer: '" + std::string(text) + "'");
    }
    return value;
}

unsigned default_workers() {
    if (const char* env = std::getenv("MALBENCH_WORKERS")) {
        try {
            const long long n = parse_integer(env);
            if (n > 0) return static_cast<unsigned>(n);
        } catch (const Error&) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    if (workers <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    const std::size_t count = std::min<std::size_t>(workers, n);
    std::vector<std::jthread> threads;
    threads.reserve(count);
    for (std::size_t t = 0; t < count; ++t) threads.emplace_back(worker);
    threads.clear();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(text.substr(start));
            return out;
        }
        out.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view trim(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return text.substr(first, last - first + 1);
}

void write_file_atomic(const std::string& path, std::string_view contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + tmp + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error(ErrorKind::IoFailure, "write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot rename " + tmp + ": " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace malbench
