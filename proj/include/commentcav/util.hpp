#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace commentcav {

// Malformed or missing input data (bad file, wrong schema, too few records).
// Library preconditions on arguments use std::invalid_argument.
class data_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// SplitMix64 is counter based: the k-th output is mix(seed + k * gamma), so any
// stream position can be reproduced from (seed, k) alone.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next();
    // uniform in [0, 1) with 53 random bits
    double uniform();
    // uniform in [0, bound), unbiased (rejection on the 128-bit product)
    uint64_t below(uint64_t bound);
    // standard normal via Box-Muller; the second variate is cached
    double gaussian();

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Fisher-Yates permutation of [0, n) driven by SplitMix64(seed).
std::vector<size_t> shuffled_indices(size_t n, uint64_t seed);

uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t value);

bool is_valid_utf8(std::string_view bytes);

std::string read_file(const std::filesystem::path & path);
// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path & path, std::string_view contents);

// Worker count: COMMENTCAV_THREADS when set (>= 1), else hardware concurrency.
size_t worker_count();

// Calls fn(i) for i in [0, n) across worker_count() threads. fn must only touch
// slot i of any shared output. The first exception thrown is rethrown.
void parallel_for(size_t n, const std::function<void(size_t)> & fn);

// Sum that does not depend on input order: values are sorted, then reduced
// pairwise.
double order_free_sum(std::vector<double> values);

} // namespace commentcav
