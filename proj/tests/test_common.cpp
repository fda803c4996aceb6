#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>

#include "malbench/common.hpp"
#include "support.hpp"

using namespace malbench;

TEST_CASE("fnv1a64 matches reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("KERNEL32.dll") == 0x92eef10bc8cc3b03ULL);
    static_assert(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(to_hex(0xcbf29ce484222325ULL) == "cbf29ce484222325");
    CHECK(to_hex(1) == "0000000000000001");
}

TEST_CASE("SplitMix64 reproduces the reference stream") {
    SplitMix64 rng(0);
    CHECK(rng.next() == 0xe220a8397b1dcdafULL);
    CHECK(rng.next() == 0x6e789e6aa1b965f4ULL);
    CHECK(rng.next() == 0x06c45d188009454fULL);
}

TEST_CASE("bounded draws stay in range and cover it") {
    SplitMix64 rng(42);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.bounded(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK(rng.bounded(1) == 0);
}

TEST_CASE("uniform and normal have plausible moments") {
    SplitMix64 rng(9);
    double su = 0, sn = 0, sn2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::fabs(sn / n) < 0.01);
    CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("derive_seed separates tags and indices") {
    CHECK(derive_seed(1, "malware") == derive_seed(1, "malware"));
    CHECK(derive_seed(1, "malware") != derive_seed(1, "benign"));
    CHECK(derive_seed(1, "malware") != derive_seed(2, "malware"));
    CHECK(derive_seed(1, "t", 0) != derive_seed(1, "t", 1));
}

TEST_CASE("format_number round-trips and prints integers plainly") {
    CHECK(format_number(3) == "3");
    CHECK(format_number(-12) == "-12");
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(1e20) == "1e+20");
    SplitMix64 rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double v = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<double>(rng.bounded(30)) - 15.0);
        CHECK(parse_number(format_number(v)) == v);
    }
}

TEST_CASE("parse_number and parse_integer reject partial input") {
    CHECK(parse_number(" 2.5 ") == 2.5);
    CHECK(parse_integer("42") == 42);
    CHECK_THROWS_AS(parse_number("2.5x"), Error);
    CHECK_THROWS_AS(parse_number(""), Error);
    CHECK_THROWS_AS(parse_integer("4.2"), Error);
}

TEST_CASE("split keeps empty fields and trim strips whitespace") {
    const auto parts = split("a,,b,", ',');
    REQUIRE(parts.size() == 4);
    CHECK(parts[1].empty());
    CHECK(parts[3].empty());
    CHECK(trim("  x y \t") == "x y");
    CHECK(trim("   ").empty());
}

TEST_CASE("Error carries its kind in the message") {
    const Error e(ErrorKind::EmptyPool, "train malware");
    CHECK(e.kind() == ErrorKind::EmptyPool);
    CHECK(std::string(e.what()) == "EmptyPool: train malware");
    CHECK(e.message() == "train malware");
}

TEST_CASE("parallel_for visits every index once and rethrows") {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(100, 3,
                                 [](std::size_t i) {
                                     if (i == 57) throw Error(ErrorKind::IoFailure, "boom");
                                 }),
                    Error);
}

TEST_CASE("write_file_atomic replaces content") {
    testing::TempDir dir;
    const auto path = dir.file("x.txt");
    write_file_atomic(path, "one");
    write_file_atomic(path, "two");
    CHECK(read_file(path) == "two");
    CHECK_THROWS_AS(read_file(dir.file("missing")), Error);
}
