#include "commentcav/dataset.hpp"

#include "commentcav/util.hpp"

#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace commentcav {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::optional<ExamplePair> make_pair(std::string id, ConceptKind concept_kind, std::string source) {
    if (!contains_concept(source, concept_kind)) {
        return std::nullopt;
    }
    std::string negative = strip_concept(source, concept_kind);
    if (negative == source) {
        return std::nullopt;
    }
    if (contains_concept(negative, concept_kind)) {
        throw std::logic_error("strip_concept left concept " + std::string(to_string(concept_kind)) +
                               " in " + id);
    }
    return ExamplePair{std::move(id), concept_kind, std::move(source), std::move(negative)};
}

BuildResult build_pairs(const fs::path & corpus_root, ConceptKind concept_kind) {
    if (!fs::is_directory(corpus_root)) {
        throw data_error("corpus root is not a directory: " + corpus_root.string());
    }
    std::vector<fs::path> files;
    for (const auto & entry : fs::recursive_directory_iterator(corpus_root)) {
        if (entry.is_regular_file() && entry.path().extension() == ".java") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    std::vector<std::optional<ExamplePair>> slots(files.size());
    std::vector<std::string> slot_warnings(files.size());
    parallel_for(files.size(), [&](size_t i) {
        const std::string rel = fs::relative(files[i], corpus_root).generic_string();
        std::string text;
        try {
            text = read_file(files[i]);
        } catch (const data_error & e) {
            slot_warnings[i] = "skipped " + rel + ": unreadable (" + e.what() + ")";
            return;
        }
        if (!is_valid_utf8(text)) {
            slot_warnings[i] = "skipped " + rel + ": invalid UTF-8";
            return;
        }
        const std::string id = rel + "#" + hex64(fnv1a64(text));
        slots[i] = make_pair(id, concept_kind, std::move(text));
    });

    BuildResult result;
    for (size_t i = 0; i < files.size(); ++i) {
        if (!slot_warnings[i].empty()) {
            result.warnings.push_back(std::move(slot_warnings[i]));
        }
        if (slots[i]) {
            result.pairs.push_back(std::move(*slots[i]));
        }
    }
    std::sort(result.pairs.begin(), result.pairs.end(),
              [](const ExamplePair & a, const ExamplePair & b) { return a.id < b.id; });
    return result;
}

size_t sample_size(size_t population, double confidence, double margin) {
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw std::invalid_argument("sample_size: confidence must lie in (0, 1)");
    }
    if (!(margin > 0.0 && margin < 1.0)) {
        throw std::invalid_argument("sample_size: margin must lie in (0, 1)");
    }
    const boost::math::normal_distribution<double> standard;
    const double z = boost::math::quantile(standard, (1.0 + confidence) / 2.0);
    if (population == 0) {
        return 0;
    }
    const double p = 0.5;
    const double n0 = z * z * p * (1.0 - p) / (margin * margin);
    const double n = n0 / (1.0 + (n0 - 1.0) / static_cast<double>(population));
    const auto rounded = static_cast<size_t>(std::llround(n));
    return std::min(rounded, population);
}

size_t min_train_size(size_t test_size) {
    // ceil(0.01 * 2n) in integer arithmetic
    return (2 * test_size + 99) / 100;
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t count, const SplitSpec & spec) {
    const size_t need = spec.test_size + spec.train_size;
    if (count < need) {
        throw data_error("split: need " + std::to_string(need) + " pairs (test " +
                         std::to_string(spec.test_size) + " + train " + std::to_string(spec.train_size) +
                         "), only " + std::to_string(count) + " available");
    }
    const auto perm = shuffled_indices(count, spec.seed);
    std::vector<size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(spec.test_size));
    std::vector<size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(spec.test_size),
                              perm.begin() + static_cast<std::ptrdiff_t>(need));
    return {std::move(train), std::move(test)};
}

Split split(const std::vector<ExamplePair> & pairs, const SplitSpec & spec) {
    const auto [train_idx, test_idx] = split_indices(pairs.size(), spec);
    Split out;
    out.train.reserve(train_idx.size());
    out.test.reserve(test_idx.size());
    for (size_t i : train_idx) {
        out.train.push_back(pairs[i]);
    }
    for (size_t i : test_idx) {
        out.test.push_back(pairs[i]);
    }
    return out;
}

std::string pairs_to_jsonl(const std::vector<ExamplePair> & pairs) {
    std::string out;
    for (const auto & p : pairs) {
        json j = {{"id", p.id}, {"concept", to_string(p.concept_kind)}, {"positive", p.positive}, {"negative", p.negative}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<ExamplePair> pairs_from_jsonl(std::string_view text) {
    std::vector<ExamplePair> pairs;
    size_t line_no = 0;
    size_t start = 0;
    while (start < text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        ++line_no;
        const auto line = text.substr(start, nl - start);
        start = nl + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        try {
            const json j = json::parse(line);
            const auto concept_kind = parse_concept(j.at("concept").get<std::string>());
            if (!concept_kind) {
                throw data_error("unknown concept");
            }
            pairs.push_back({j.at("id").get<std::string>(), *concept_kind, j.at("positive").get<std::string>(),
                             j.at("negative").get<std::string>()});
        } catch (const json::exception & e) {
            throw data_error("dataset line " + std::to_string(line_no) + ": " + e.what());
        } catch (const data_error & e) {
            throw data_error("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return pairs;
}

} // namespace commentcav
