#pragma once

#include "commentcav/comment_parser.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace commentcav {

// Original source (concept present) and the same source with the concept
// stripped. The constructor helper make_pair enforces the invariants.
struct ExamplePair {
    std::string id;
    ConceptKind concept_kind = ConceptKind::Comment;
    std::string positive;
    std::string negative;
};

// Returns nullopt when source lacks the concept or stripping is a no-op.
std::optional<ExamplePair> make_pair(std::string id, ConceptKind concept_kind, std::string source);

struct BuildResult {
    std::vector<ExamplePair> pairs;
    std::vector<std::string> warnings;
};

// One pair per *.java file under corpus_root (recursive). Ids are the
// corpus-relative path plus '#' and the FNV-1a hash of the file contents.
BuildResult build_pairs(const std::filesystem::path & corpus_root, ConceptKind concept_kind);

// Cochran's sample size with finite-population correction, p = 0.5.
size_t sample_size(size_t population, double confidence = 0.95, double margin = 0.05);

struct SplitSpec {
    size_t test_size = 0;
    size_t train_size = 0;
    uint64_t seed = 0;
};

// Smallest admissible train size for a test set of n records: ceil(0.01 * 2n).
size_t min_train_size(size_t test_size);

struct Split {
    std::vector<ExamplePair> train;
    std::vector<ExamplePair> test;
};

// Test = first test_size entries of the seed permutation, train = the next
// train_size. Throws data_error when there are not enough pairs.
Split split(const std::vector<ExamplePair> & pairs, const SplitSpec & spec);

// Permutation positions used by split(); exposed so embeddings can be split
// with exactly the same membership.
std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t count, const SplitSpec & spec);

// JSON Lines: {"id","concept","positive","negative"} per line.
std::string pairs_to_jsonl(const std::vector<ExamplePair> & pairs);
std::vector<ExamplePair> pairs_from_jsonl(std::string_view text);

} // namespace commentcav
