#include "commentcav/metrics.hpp"

#include "commentcav/comment_parser.hpp"
#include "commentcav/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace commentcav::metrics {

std::string normalize_newlines(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            continue;
        }
        out.push_back(text[i]);
    }
    return out;
}

int exact_match(std::string_view candidate, std::string_view reference) {
    return normalize_newlines(candidate) == normalize_newlines(reference) ? 1 : 0;
}

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view strip(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool is_fence(std::string_view line) {
    return strip(line).substr(0, 3) == "```";
}

} // namespace

std::string trim(std::string_view candidate) {
    const std::string text = normalize_newlines(candidate);
    std::vector<std::string_view> lines;
    size_t start = 0;
    for (;;) {
        const size_t nl = text.find('\n', start);
        lines.push_back(std::string_view(text).substr(start, nl == std::string::npos ? std::string::npos : nl - start));
        if (nl == std::string::npos) {
            break;
        }
        start = nl + 1;
    }
    const auto open = std::find_if(lines.begin(), lines.end(), is_fence);
    if (open == lines.end()) {
        return std::string(strip(text));
    }
    const auto close = std::find_if(open + 1, lines.end(), is_fence);
    std::string inner;
    for (auto it = open + 1; it != close; ++it) {
        if (it != open + 1) {
            inner += '\n';
        }
        inner.append(*it);
    }
    return std::string(strip(inner));
}

int em_trim(std::string_view candidate, std::string_view reference) {
    const std::string t = trim(candidate);
    const std::string r = normalize_newlines(reference);
    const bool hit = t == r || t.starts_with(r) || t.ends_with(r);
    return hit ? 1 : 0;
}

std::vector<std::string> bleu_tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            tokens.push_back(std::move(word));
            word.clear();
        }
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c == '_' || c >= 0x80) {
            word.push_back(ch);
        } else if (is_space(ch)) {
            flush();
        } else {
            flush();
            tokens.emplace_back(1, ch);
        }
    }
    flush();
    return tokens;
}

namespace {

struct VectorHash {
    size_t operator()(const std::vector<std::string> & v) const {
        uint64_t h = 0xCBF29CE484222325ULL;
        for (const auto & s : v) {
            h ^= fnv1a64(s) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
        }
        return static_cast<size_t>(h);
    }
};

using NgramCounts = std::unordered_map<std::vector<std::string>, size_t, VectorHash>;

NgramCounts ngrams(const std::vector<std::string> & toks, size_t n) {
    NgramCounts counts;
    for (size_t i = 0; i + n <= toks.size(); ++i) {
        ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                          toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

} // namespace

double bleu4(std::string_view candidate, std::string_view reference) {
    const auto cand = bleu_tokenize(normalize_newlines(candidate));
    const auto ref = bleu_tokenize(normalize_newlines(reference));
    if (cand.empty()) {
        return 0.0;
    }
    double log_sum = 0.0;
    for (size_t n = 1; n <= 4; ++n) {
        const auto c_counts = ngrams(cand, n);
        const auto r_counts = ngrams(ref, n);
        size_t matched = 0;
        for (const auto & [gram, count] : c_counts) {
            const auto it = r_counts.find(gram);
            if (it != r_counts.end()) {
                matched += std::min(count, it->second);
            }
        }
        const size_t total = cand.size() >= n ? cand.size() - n + 1 : 0;
        double p;
        if (matched == 0) {
            if (n == 1) {
                return 0.0;
            }
            p = 1.0 / (2.0 * static_cast<double>(std::max<size_t>(1, total)));
        } else {
            p = static_cast<double>(matched) / static_cast<double>(total);
        }
        log_sum += 0.25 * std::log(p);
    }
    const auto c = static_cast<double>(cand.size());
    const auto r = static_cast<double>(ref.size());
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return std::clamp(bp * std::exp(log_sum), 0.0, 1.0);
}

double bleu_trim(std::string_view candidate, std::string_view reference) {
    return bleu4(trim(candidate), reference);
}

namespace {

std::vector<uint32_t> code_points(std::string_view s) {
    std::vector<uint32_t> out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        size_t len = c < 0x80 ? 1 : (c & 0xE0) == 0xC0 ? 2 : (c & 0xF0) == 0xE0 ? 3 : (c & 0xF8) == 0xF0 ? 4 : 0;
        if (len > 1 && i + len <= s.size() && is_valid_utf8(s.substr(i, len))) {
            uint32_t cp = c & (0xFF >> (len + 1));
            for (size_t k = 1; k < len; ++k) {
                cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
            }
            out.push_back(cp);
            i += len;
        } else {
            // lone or invalid byte: keep it distinct from every code point
            out.push_back(len == 1 ? c : 0x110000u + c);
            ++i;
        }
    }
    return out;
}

} // namespace

size_t levenshtein(std::string_view a_text, std::string_view b_text) {
    const auto a = code_points(a_text);
    const auto b = code_points(b_text);
    if (a.empty()) return b.size();
    if (b.empty()) return a.size();
    std::vector<size_t> row(b.size() + 1);
    for (size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (size_t i = 1; i <= a.size(); ++i) {
        size_t diag = row[0];
        row[0] = i;
        for (size_t j = 1; j <= b.size(); ++j) {
            const size_t up = row[j];
            const size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
            row[j] = std::min({up + 1, row[j - 1] + 1, sub});
            diag = up;
        }
    }
    return row[b.size()];
}

double edit_similarity(std::string_view candidate, std::string_view reference) {
    const std::string c = normalize_newlines(candidate);
    const std::string r = normalize_newlines(reference);
    const size_t longest = std::max(code_points(c).size(), code_points(r).size());
    if (longest == 0) {
        return 1.0;
    }
    return 1.0 - static_cast<double>(levenshtein(c, r)) / static_cast<double>(longest);
}

namespace {

const std::unordered_set<std::string_view> & excluded_words() {
    static const std::unordered_set<std::string_view> words = {
        "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
        "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
        "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long", "native",
        "new", "package", "private", "protected", "public", "return", "short", "static", "strictfp", "super",
        "switch", "synchronized", "this", "throw", "throws", "transient", "try", "void", "volatile", "while",
        "true", "false", "null",
    };
    return words;
}

bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool ident_part(char c) {
    return ident_start(c) || std::isdigit(static_cast<unsigned char>(c));
}

} // namespace

std::vector<std::string> extract_identifiers(std::string_view code) {
    std::vector<std::string> ids;
    for (const Region & r : lex_regions(code)) {
        if (r.kind != RegionKind::Code) {
            continue;
        }
        size_t i = r.begin;
        while (i < r.end) {
            const char c = code[i];
            if (ident_start(c)) {
                size_t j = i + 1;
                while (j < r.end && ident_part(code[j])) ++j;
                const std::string_view word = code.substr(i, j - i);
                if (!excluded_words().count(word)) {
                    ids.emplace_back(word);
                }
                i = j;
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                // numeric literal, including suffixes and exponents like 1e5f or 0x1F
                size_t j = i + 1;
                while (j < r.end && (ident_part(code[j]) || code[j] == '.')) ++j;
                i = j;
            } else {
                ++i;
            }
        }
    }
    return ids;
}

IdMatch id_match_lists(const std::vector<std::string> & cand, const std::vector<std::string> & ref) {
    IdMatch m;
    m.em = cand == ref ? 1 : 0;
    if (cand.empty() && ref.empty()) {
        m.f1 = 1.0;
        return m;
    }
    std::unordered_map<std::string, size_t> c_count, r_count;
    for (const auto & s : cand) ++c_count[s];
    for (const auto & s : ref) ++r_count[s];
    for (const auto & [s, c] : c_count) {
        const auto it = r_count.find(s);
        const size_t r = it == r_count.end() ? 0 : it->second;
        m.tp += std::min(c, r);
        if (c > r) m.fp += c - r;
    }
    for (const auto & [s, r] : r_count) {
        const auto it = c_count.find(s);
        const size_t c = it == c_count.end() ? 0 : it->second;
        if (r > c) m.fn += r - c;
    }
    const double denom = 2.0 * static_cast<double>(m.tp) + static_cast<double>(m.fp) + static_cast<double>(m.fn);
    m.f1 = 2.0 * static_cast<double>(m.tp) / denom;
    return m;
}

IdMatch id_match(std::string_view candidate, std::string_view reference) {
    return id_match_lists(extract_identifiers(candidate), extract_identifiers(reference));
}

double relative_delta(double modified, double original) {
    if (original == 0.0) {
        throw std::domain_error("relative_delta: undefined for a zero baseline");
    }
    return (modified - original) / original * 100.0;
}

double success_rate(const std::vector<bool> & outcomes) {
    if (outcomes.empty()) {
        throw std::invalid_argument("success_rate: empty outcome list");
    }
    const auto hits = std::count(outcomes.begin(), outcomes.end(), true);
    return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

double compute(std::string_view metric, std::string_view candidate, std::string_view reference) {
    if (metric == "em") return exact_match(candidate, reference);
    if (metric == "em_trim") return em_trim(candidate, reference);
    if (metric == "bleu4") return bleu4(candidate, reference);
    if (metric == "bleu_trim") return bleu_trim(candidate, reference);
    if (metric == "es") return edit_similarity(candidate, reference);
    if (metric == "id_em") return id_match(candidate, reference).em;
    if (metric == "id_f1") return id_match(candidate, reference).f1;
    throw std::invalid_argument("unknown metric: " + std::string(metric));
}

MetricReport evaluate(const std::vector<std::string> & ids, const std::vector<std::string> & candidates,
                      const std::vector<std::string> & references, const std::vector<std::string> & metric_names) {
    if (ids.size() != candidates.size() || ids.size() != references.size()) {
        throw std::invalid_argument("evaluate: ids, candidates and references differ in length");
    }
    for (const auto & m : metric_names) {
        compute(m, "", ""); // validates the name
    }
    MetricReport report;
    report.ids = ids;
    report.per_record.resize(ids.size());
    parallel_for(ids.size(), [&](size_t i) {
        for (const auto & m : metric_names) {
            report.per_record[i][m] = compute(m, candidates[i], references[i]);
        }
    });
    for (const auto & m : metric_names) {
        std::vector<double> column;
        column.reserve(ids.size());
        for (const auto & row : report.per_record) {
            column.push_back(row.at(m));
        }
        report.aggregate[m] = column.empty() ? 0.0 : order_free_sum(column) / static_cast<double>(column.size());
    }
    return report;
}

} // namespace commentcav::metrics
