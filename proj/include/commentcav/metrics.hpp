#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace commentcav::metrics {

// CRLF -> LF.
std::string normalize_newlines(std::string_view text);

int exact_match(std::string_view candidate, std::string_view reference);

// Strips surrounding whitespace. When a ``` fence line exists, drops any prose
// before it, the fence itself and everything from the closing fence on.
std::string trim(std::string_view candidate);

// trim(candidate) equals, starts with, or ends with the reference.
int em_trim(std::string_view candidate, std::string_view reference);

// Word runs ([A-Za-z0-9_] and non-ASCII bytes) and single punctuation
// characters; whitespace separates.
std::vector<std::string> bleu_tokenize(std::string_view text);

// Clipped n-gram precisions for n = 1..4, uniform weights, brevity penalty.
// A zero precision for n > 1 becomes 1 / (2 * max(1, candidate n-gram count)).
double bleu4(std::string_view candidate, std::string_view reference);
double bleu_trim(std::string_view candidate, std::string_view reference);

// Levenshtein distance over Unicode code points (invalid bytes count as one
// unit each).
size_t levenshtein(std::string_view a, std::string_view b);
double edit_similarity(std::string_view candidate, std::string_view reference);

// Java identifiers outside comments and literals, keywords and
// true/false/null removed, in occurrence order.
std::vector<std::string> extract_identifiers(std::string_view code);

struct IdMatch {
    int em = 0;
    double f1 = 0.0;
    size_t tp = 0, fp = 0, fn = 0;
};

IdMatch id_match(std::string_view candidate, std::string_view reference);
IdMatch id_match_lists(const std::vector<std::string> & candidate, const std::vector<std::string> & reference);

// Percent change; throws std::domain_error for a zero baseline.
double relative_delta(double modified, double original);

// Throws std::invalid_argument for an empty list.
double success_rate(const std::vector<bool> & outcomes);

inline const std::vector<std::string> kAllMetrics = {"em", "em_trim", "bleu4", "bleu_trim", "es", "id_em", "id_f1"};

// Throws std::invalid_argument for an unknown metric name.
double compute(std::string_view metric, std::string_view candidate, std::string_view reference);

struct MetricReport {
    std::vector<std::string> ids;
    std::vector<std::map<std::string, double>> per_record;
    std::map<std::string, double> aggregate; // mean over records
};

MetricReport evaluate(const std::vector<std::string> & ids, const std::vector<std::string> & candidates,
                      const std::vector<std::string> & references, const std::vector<std::string> & metric_names);

} // namespace commentcav::metrics
