#include "commentcav/dataset.hpp"
#include "commentcav/util.hpp"

#include "java_corpus.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

using namespace commentcav;
namespace fs = std::filesystem;

namespace {

void put(const fs::path & p, const std::string & text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

std::vector<ExamplePair> fake_pairs(size_t n) {
    std::vector<ExamplePair> v;
    for (size_t i = 0; i < n; ++i) {
        v.push_back({"p" + std::to_string(i), ConceptKind::Comment, "// c\nx" + std::to_string(i), "x"});
    }
    return v;
}

std::set<std::string> ids(const std::vector<ExamplePair> & v) {
    std::set<std::string> s;
    for (const auto & p : v) {
        s.insert(p.id);
    }
    return s;
}

} // namespace

TEST_SUITE("dataset") {

TEST_CASE("make_pair invariants") {
    auto p = make_pair("a", ConceptKind::Comment, "int x; // c\n");
    REQUIRE(p.has_value());
    CHECK(p->negative == "int x;\n");
    CHECK(contains_concept(p->positive, ConceptKind::Comment));
    CHECK_FALSE(contains_concept(p->negative, ConceptKind::Comment));
    CHECK_FALSE(make_pair("b", ConceptKind::Javadoc, "int x; // c\n").has_value());
    CHECK_FALSE(make_pair("c", ConceptKind::Comment, "int x;\n").has_value());
}

TEST_CASE("build_pairs filters by concept") {
    const auto dir = testing::make_temp_dir("ds");
    put(dir / "A.java", "int a; // one\n");
    put(dir / "sub/B.java", "// two\nint b;\n");
    put(dir / "C.java", "int c;\n");
    put(dir / "notes.txt", "// not java\n");
    auto r = build_pairs(dir, ConceptKind::Comment);
    CHECK(r.pairs.size() == 2);
    CHECK(r.warnings.empty());
    for (const auto & p : r.pairs) {
        CHECK(p.id.find('#') != std::string::npos);
        CHECK(p.concept_kind == ConceptKind::Comment);
    }
    CHECK(std::is_sorted(r.pairs.begin(), r.pairs.end(), [](auto & a, auto & b) { return a.id < b.id; }));
    CHECK(r.pairs[0].id.rfind("A.java#", 0) == 0);
    CHECK(r.pairs[1].id.rfind("sub/B.java#", 0) == 0);
}

TEST_CASE("one-line block only is not javadoc") {
    const auto dir = testing::make_temp_dir("ds");
    put(dir / "X.java", "/* x */\nint a;\n");
    CHECK(build_pairs(dir, ConceptKind::Javadoc).pairs.empty());
    CHECK(build_pairs(dir, ConceptKind::Inline).pairs.size() == 1);
}

TEST_CASE("empty and missing corpus") {
    const auto dir = testing::make_temp_dir("ds");
    CHECK(build_pairs(dir, ConceptKind::Comment).pairs.empty());
    CHECK_THROWS_AS(build_pairs(dir / "nope", ConceptKind::Comment), data_error);
}

TEST_CASE("invalid utf8 is skipped with a warning") {
    const auto dir = testing::make_temp_dir("ds");
    put(dir / "Bad.java", "int a; // \xff\xfe\n");
    put(dir / "Good.java", "int a; // ok\n");
    auto r = build_pairs(dir, ConceptKind::Comment);
    CHECK(r.pairs.size() == 1);
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("Bad.java") != std::string::npos);
}

TEST_CASE("ids are stable across builds") {
    const auto dir = testing::make_temp_dir("ds");
    testing::write_corpus(dir, 30, 2);
    auto a = build_pairs(dir, ConceptKind::Comment);
    auto b = build_pairs(dir, ConceptKind::Comment);
    CHECK(a.pairs.size() == 30);
    CHECK(ids(a.pairs) == ids(b.pairs));
}

TEST_CASE("sample_size reproduces published values") {
    CHECK(sample_size(1046) == 281);
    CHECK(sample_size(103) == 81);
    // rounding to nearest, as the published values require
    CHECK(sample_size(1000000000) == 384);
    // published as 43; the formula gives 42
    CHECK(sample_size(47) == 42);
    CHECK(sample_size(0) == 0);
    CHECK(sample_size(1) == 1);
}

TEST_CASE("sample_size argument checks") {
    CHECK_THROWS_AS(sample_size(100, 0.0, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(sample_size(100, 1.0, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(sample_size(100, 0.95, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(sample_size(100, 0.95, 1.5), std::invalid_argument);
}

TEST_CASE("sample_size is monotone and bounded") {
    size_t prev = 0;
    for (size_t n = 0; n <= 20000; ++n) {
        const size_t s = sample_size(n);
        CHECK(s >= prev);
        CHECK(s <= n);
        prev = s;
    }
}

TEST_CASE("split protocol") {
    const auto pairs = fake_pairs(750);
    auto full = split(pairs, {375, 375, 7});
    CHECK(full.test.size() == 375);
    CHECK(full.train.size() == 375);
    auto t = ids(full.test), r = ids(full.train);
    std::vector<std::string> both;
    std::set_intersection(t.begin(), t.end(), r.begin(), r.end(), std::back_inserter(both));
    CHECK(both.empty());

    auto small = split(pairs, {375, 8, 7});
    CHECK(small.train.size() == 8);
    CHECK(ids(small.test) == t);
    for (const auto & p : small.train) {
        CHECK(r.count(p.id) == 1);
    }

    auto other = split(pairs, {375, 375, 8});
    CHECK(other.test.size() == 375);
    CHECK(ids(other.test) != t);
}

TEST_CASE("split reports required and available counts") {
    try {
        split(fake_pairs(100), {375, 8, 7});
        FAIL("expected data_error");
    } catch (const data_error & e) {
        const std::string msg = e.what();
        CHECK(msg.find("383") != std::string::npos);
        CHECK(msg.find("100") != std::string::npos);
    }
}

TEST_CASE("min_train_size") {
    CHECK(min_train_size(375) == 8);
    CHECK(min_train_size(50) == 1);
}

TEST_CASE("jsonl round trip") {
    std::vector<ExamplePair> v = {{"a#1", ConceptKind::Inline, "x; // \"q\"\n", "x;\n"},
                                  {"b#2", ConceptKind::Javadoc, "/*\n*/\ny;", "y;"}};
    const auto text = pairs_to_jsonl(v);
    const auto back = pairs_from_jsonl(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "a#1");
    CHECK(back[0].concept_kind == ConceptKind::Inline);
    CHECK(back[0].positive == v[0].positive);
    CHECK(back[1].negative == "y;");
    CHECK_THROWS_AS(pairs_from_jsonl("{not json}\n"), data_error);
    CHECK_THROWS_AS(pairs_from_jsonl("{\"id\":\"a\"}\n"), data_error);
}

}
