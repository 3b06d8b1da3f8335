#include "commentcav/metrics.hpp"
#include "commentcav/util.hpp"

#include <doctest.h>

#include <cmath>

using namespace commentcav;
using namespace commentcav::metrics;

namespace {

std::string random_text(SplitMix64 & rng, size_t max_len) {
    static const std::vector<std::string> pieces = {"a", "b", "x", "int", " ", "\n", "(", ")", ";", "=", "foo",
                                                    "\xc3\xa9", "\r\n", "```", "{", "}", "1", "_y", "\t"};
    std::string s;
    const size_t n = rng.below(max_len + 1);
    for (size_t i = 0; i < n; ++i) {
        s += pieces[rng.below(pieces.size())];
    }
    return s;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("exact match") {
    CHECK(exact_match("int x;", "int x;") == 1);
    CHECK(exact_match("int x;", "int y;") == 0);
    CHECK(exact_match("a\r\nb", "a\nb") == 1);
}

TEST_CASE("trim") {
    CHECK(trim("```java\nint x;\n```") == "int x;");
    CHECK(trim("  int x;  ") == "int x;");
    CHECK(trim("int x;") == "int x;");
    CHECK(trim("Here you go:\n```java\nint x;\n```\nThanks") == "int x;");
}

TEST_CASE("em_trim") {
    const std::string ref = "int x = 1;";
    CHECK(em_trim(ref + "\n// extra", ref) == 1);
    CHECK(em_trim("junk" + ref, ref) == 1);
    CHECK(em_trim("```java\n" + ref + "\n```", ref) == 1);
    CHECK(em_trim("while (true) {}", ref) == 0);
}

TEST_CASE("bleu tokenization") {
    CHECK(bleu_tokenize("foo(bar_1, 2);") == std::vector<std::string>{"foo", "(", "bar_1", ",", "2", ")", ";"});
    CHECK(bleu_tokenize("  ").empty());
}

TEST_CASE("bleu golden values") {
    CHECK(bleu4("a b c d e", "a b c d f") == doctest::Approx(std::pow(0.8 * 0.75 * (2.0 / 3.0) * 0.5, 0.25)));
    CHECK(std::abs(bleu4("a b c d e", "a b c d f") - 0.6687) <= 1e-3);
    CHECK(bleu4("int x = y + 1 ;", "int x = y + 1 ;") == doctest::Approx(1.0));
    CHECK(bleu4("", "a b c d") == 0.0);
    CHECK(bleu4("q r s t", "a b c d") == 0.0);
}

TEST_CASE("bleu brevity penalty") {
    // candidate is a 4-token prefix of a 6-token reference: precisions 1, BP exp(1 - 6/4)
    CHECK(bleu4("a b c d", "a b c d e f") == doctest::Approx(std::exp(1.0 - 6.0 / 4.0)));
}

TEST_CASE("bleu smoothing for short candidates") {
    // 2 tokens: p1 = 1, p2 = 1, no 3/4-grams -> 1/(2*1) each, BP exp(1 - 4/2)
    const double expected = std::exp(1.0 - 2.0) * std::pow(1.0 * 1.0 * 0.5 * 0.5, 0.25);
    CHECK(bleu4("a b", "a b c d") == doctest::Approx(expected));
}

TEST_CASE("bleu_trim") {
    CHECK(bleu_trim("```java\nint x = 1 ;\n```", "int x = 1 ;") == doctest::Approx(1.0));
    CHECK(bleu_trim("a b c d e", "a b c d f") == bleu4("a b c d e", "a b c d f"));
    CHECK(bleu_trim("```\na b c d e\n```", "a b c d f") == bleu4("a b c d e", "a b c d f"));
}

TEST_CASE("edit similarity") {
    CHECK(edit_similarity("abc", "abc") == 1.0);
    CHECK(std::abs(edit_similarity("abc", "axc") - 2.0 / 3.0) <= 1e-9);
    CHECK(edit_similarity("", "abc") == 0.0);
    CHECK(edit_similarity("", "") == 1.0);
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("caf\xc3\xa9", "cafe") == 1);
    CHECK(edit_similarity("a\r\nb", "a\nb") == 1.0);
}

TEST_CASE("identifier extraction") {
    CHECK(extract_identifiers("int foo = bar(1);") == std::vector<std::string>{"foo", "bar"});
    CHECK(extract_identifiers("// skip me\nx;") == std::vector<std::string>{"x"});
    CHECK(extract_identifiers("\"y z\"").empty());
    CHECK(extract_identifiers("return true && null == $v1 || 0x1F;") == std::vector<std::string>{"$v1"});
}

TEST_CASE("identifier match") {
    auto m = id_match_lists({"a", "b", "c"}, {"a", "b", "d"});
    CHECK(m.tp == 2);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(std::abs(m.f1 - 2.0 / 3.0) <= 1e-9);
    CHECK(m.em == 0);
    m = id_match_lists({"a", "b"}, {"a", "b"});
    CHECK(m.em == 1);
    CHECK(m.f1 == 1.0);
    m = id_match_lists({}, {"a"});
    CHECK(m.tp == 0);
    CHECK(m.fn == 1);
    CHECK(m.f1 == 0.0);
    m = id_match_lists({}, {});
    CHECK(m.em == 1);
    CHECK(m.f1 == 1.0);
    // multisets
    m = id_match_lists({"a", "a", "b"}, {"a", "b", "b"});
    CHECK(m.tp == 2);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(id_match("int a = b;", "int a = c;").f1 == doctest::Approx(0.5));
}

TEST_CASE("relative delta and success rate") {
    CHECK(relative_delta(12, 10) == doctest::Approx(20.0));
    CHECK(std::abs(relative_delta(92, 90) - 2.222) <= 1e-3);
    CHECK(relative_delta(5, 5) == 0.0);
    CHECK_THROWS_AS(relative_delta(1, 0), std::domain_error);
    CHECK(success_rate({true, true}) == 1.0);
    CHECK(success_rate({false, false}) == 0.0);
    CHECK(success_rate({true, true, false, true}) == 0.75);
    CHECK_THROWS_AS(success_rate({}), std::invalid_argument);
}

TEST_CASE("compute and evaluate") {
    CHECK(compute("em", "x", "x") == 1.0);
    CHECK_THROWS_AS(compute("rouge", "x", "x"), std::invalid_argument);
    const auto r = evaluate({"1", "2"}, {"a b", "x"}, {"a b", "y"}, {"em", "es"});
    CHECK(r.aggregate.at("em") == 0.5);
    CHECK(r.per_record.size() == 2);
    CHECK_THROWS_AS(evaluate({"1"}, {"a", "b"}, {"a"}, {"em"}), std::invalid_argument);
}

TEST_CASE("fuzzed invariants") {
    SplitMix64 rng(99);
    for (int i = 0; i < 2000; ++i) {
        const auto a = random_text(rng, 12);
        const auto b = random_text(rng, 12);
        CAPTURE(a);
        CAPTURE(b);
        for (const auto & name : kAllMetrics) {
            const double v = compute(name, a, b);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(levenshtein(a, b) == levenshtein(b, a));
        CHECK(edit_similarity(a, b) == edit_similarity(b, a));
        CHECK(exact_match(a, b) == exact_match(b, a));
        CHECK(id_match(a, b).f1 == id_match(b, a).f1);
        CHECK(compute("es", a, a) == 1.0);
        CHECK(compute("em", a, a) == 1.0);
    }
}

}
