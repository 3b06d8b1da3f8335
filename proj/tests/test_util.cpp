#include "commentcav/util.hpp"

#include "java_corpus.hpp"

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

using namespace commentcav;

TEST_SUITE("util") {

TEST_CASE("splitmix is reproducible and seed sensitive") {
    SplitMix64 a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const uint64_t x = a.next();
        CHECK(x == b.next());
        CHECK(x != c.next());
    }
}

TEST_CASE("uniform and below stay in range") {
    SplitMix64 rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(rng.below(7) < 7);
    }
}

TEST_CASE("gaussian moments") {
    SplitMix64 rng(9);
    const int n = 200000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sq += g * g;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("shuffled_indices is a permutation") {
    auto p = shuffled_indices(1000, 5);
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    std::vector<size_t> iota(1000);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    CHECK(p == shuffled_indices(1000, 5));
    CHECK(p != shuffled_indices(1000, 6));
}

TEST_CASE("fnv1a64 known values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("utf8 validation") {
    CHECK(is_valid_utf8("plain"));
    CHECK(is_valid_utf8("caf\xc3\xa9"));
    CHECK_FALSE(is_valid_utf8("\xff"));
    CHECK_FALSE(is_valid_utf8("\xc3"));
    CHECK_FALSE(is_valid_utf8("\xc0\xaf")); // overlong
}

TEST_CASE("atomic write then read") {
    const auto dir = testing::make_temp_dir("util");
    write_file_atomic(dir / "f.txt", "hello");
    CHECK(read_file(dir / "f.txt") == "hello");
    write_file_atomic(dir / "f.txt", "again");
    CHECK(read_file(dir / "f.txt") == "again");
    CHECK_THROWS_AS(read_file(dir / "missing"), data_error);
}

TEST_CASE("parallel_for touches every index once and rethrows") {
    std::vector<int> hits(500, 0);
    parallel_for(hits.size(), [&](size_t i) { hits[i] += 1; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK_THROWS_AS(parallel_for(10, [](size_t i) {
        if (i == 3) {
            throw std::runtime_error("boom");
        }
    }), std::runtime_error);
}

TEST_CASE("order_free_sum ignores order") {
    SplitMix64 rng(3);
    std::vector<double> v(1000);
    for (auto & x : v) {
        x = rng.gaussian() * std::pow(10.0, static_cast<double>(rng.below(12)) - 6.0);
    }
    const double s = order_free_sum(v);
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto perm = shuffled_indices(v.size(), seed);
        std::vector<double> w;
        for (size_t i : perm) {
            w.push_back(v[i]);
        }
        CHECK(order_free_sum(w) == s);
    }
    CHECK(order_free_sum({}) == 0.0);
}

}
