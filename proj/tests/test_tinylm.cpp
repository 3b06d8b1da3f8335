#include "commentcav/tinylm.hpp"
#include "commentcav/util.hpp"

#include "java_corpus.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace commentcav;
using namespace commentcav::tinylm;

namespace {

ModelConfig small_config(uint64_t seed = 0) {
    ModelConfig c;
    c.d_model = 32;
    c.n_layers = 4;
    c.n_heads = 4;
    c.max_seq = 128;
    c.seed = seed;
    return c;
}

double max_abs_diff(const std::vector<double> & a, const std::vector<double> & b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

} // namespace

TEST_SUITE("tinylm") {

TEST_CASE("tokenize examples") {
    CHECK(tokenize("") == std::vector<int>{kBos});
    CHECK(tokenize("A") == std::vector<int>{kBos, 65});
    const std::string s = "caf\xc3\xa9 \x01\xff\n";
    CHECK(detokenize(tokenize(s)) == s);
    std::vector<int> with_specials = {kBos, 104, kPad, 105, kEos};
    CHECK(detokenize(with_specials) == "hi");
}

TEST_CASE("config validation") {
    ModelConfig c;
    c.n_heads = 5;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = ModelConfig{};
    c.n_layers = 0;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = ModelConfig{};
    c.vocab_size = 300;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    CHECK_NOTHROW(validate(ModelConfig{}));
}

TEST_CASE("init is deterministic and seed dependent") {
    const auto a = init_model(small_config(1));
    const auto b = init_model(small_config(1));
    const auto c = init_model(small_config(2));
    CHECK(a.token_embedding == b.token_embedding);
    CHECK(a.layers[0].wq == b.layers[0].wq);
    CHECK(a.token_embedding[0] != c.token_embedding[0]);
    CHECK(a.layers[0].ln1_gain[0] == 1.0);
    CHECK(a.layers[0].ln1_bias[0] == 0.0);
}

TEST_CASE("capture shapes and determinism") {
    const auto m = init_model(small_config());
    const auto toks = tokenize("int x = 1; // hi");
    const auto r1 = forward_capture(m, toks);
    const auto r2 = forward_capture(m, toks);
    CHECK(r1.logits.size() == kVocabSize);
    REQUIRE(r1.trace.size() == 4);
    for (size_t l = 0; l < 4; ++l) {
        CHECK(r1.trace[l].layer == l + 1);
        CHECK(r1.trace[l].vector.size() == 32);
    }
    CHECK(r1.logits == r2.logits);
    CHECK(r1.trace[3].vector == r2.trace[3].vector);
}

TEST_CASE("capture errors") {
    const auto m = init_model(small_config());
    CHECK_THROWS_AS(forward_capture(m, std::vector<int>{}), std::invalid_argument);
    std::vector<int> too_long(129, 65);
    CHECK_THROWS_AS(forward_capture(m, too_long), std::invalid_argument);
    CHECK_THROWS_AS(forward_capture(m, std::vector<int>{kBos, 400}), std::invalid_argument);
}

TEST_CASE("prefix invariance") {
    const auto m = init_model(small_config(3));
    const auto toks = tokenize("class A { int f; // field\n}");
    const auto traces = forward_traces(m, toks);
    for (size_t k = 1; k <= toks.size(); k += 5) {
        std::vector<int> prefix(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(k));
        const auto r = forward_capture(m, prefix);
        for (size_t l = 0; l < r.trace.size(); ++l) {
            CHECK(max_abs_diff(r.trace[l].vector, traces[k - 1][l].vector) <= 1e-9);
        }
    }
}

TEST_CASE("causality: later tokens do not change earlier states") {
    const auto m = init_model(small_config(4));
    SplitMix64 rng(8);
    for (int iter = 0; iter < 5; ++iter) {
        auto a = tokenize("public int f() { return 0; }");
        auto b = a;
        const size_t cut = 5 + rng.below(a.size() - 6);
        for (size_t i = cut + 1; i < b.size(); ++i) {
            b[i] = static_cast<int>(rng.below(256));
        }
        const auto ta = forward_traces(m, a);
        const auto tb = forward_traces(m, b);
        for (size_t i = 0; i <= cut; ++i) {
            for (size_t l = 0; l < 4; ++l) {
                CHECK(ta[i][l].vector == tb[i][l].vector);
            }
        }
    }
}

TEST_CASE("save and load round trip") {
    const auto m = init_model(small_config(5));
    const auto dir = testing::make_temp_dir("tlm");
    save_model(m, dir / "m.tlm");
    const auto back = load_model(dir / "m.tlm");
    CHECK(back.config == m.config);
    CHECK(back.token_embedding == m.token_embedding);
    CHECK(back.layers[3].ff_out == m.layers[3].ff_out);
    CHECK(back.unembedding == m.unembedding);
    const std::string bytes = read_file(dir / "m.tlm");
    CHECK(bytes.substr(0, 4) == "TLM1");
    // little-endian d_model right after the magic
    CHECK(static_cast<unsigned char>(bytes[4]) == 32);
    CHECK(bytes[5] == 0);
}

TEST_CASE("load rejects bad files") {
    const auto dir = testing::make_temp_dir("tlm");
    std::ofstream(dir / "bad.tlm") << "XXXX";
    CHECK_THROWS_AS(load_model(dir / "bad.tlm"), data_error);
    const auto m = init_model(small_config());
    save_model(m, dir / "m.tlm");
    std::string bytes = read_file(dir / "m.tlm");
    write_file_atomic(dir / "short.tlm", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_model(dir / "short.tlm"), data_error);
    write_file_atomic(dir / "long.tlm", bytes + "x");
    CHECK_THROWS_AS(load_model(dir / "long.tlm"), data_error);
}

TEST_CASE("greedy generation is deterministic") {
    const auto m = init_model(small_config(6));
    const auto a = generate(m, "int x = ", 10);
    CHECK(a == generate(m, "int x = ", 10));
    CHECK(generate(m, "int x = ", 0).empty());
    CHECK_THROWS_AS(generate(m, std::string(120, 'a'), 10), std::invalid_argument);
}

TEST_CASE("noop hook leaves generation unchanged") {
    const auto m = init_model(small_config(6));
    const LayerHook noop = [](size_t, std::span<double>) {};
    CHECK(generate(m, "int x = ", 10, &noop) == generate(m, "int x = ", 10));
}

TEST_CASE("hook locality: layers before the edited one are untouched") {
    const auto m = init_model(small_config(7));
    const auto toks = tokenize("return a + b;");
    const auto base = forward_capture(m, toks);
    const LayerHook hook = [](size_t layer, std::span<double> s) {
        if (layer == 3) {
            for (double & x : s) {
                x += 1.0;
            }
        }
    };
    Session session(m);
    for (size_t i = 0; i + 1 < toks.size(); ++i) {
        session.feed(toks[i]);
    }
    CaptureTrace trace;
    session.step(toks.back(), &hook, &trace);
    CHECK(trace[0].vector == base.trace[0].vector);
    CHECK(trace[1].vector == base.trace[1].vector);
    CHECK(trace[2].vector != base.trace[2].vector);
    CHECK(trace[3].vector != base.trace[3].vector);
}

TEST_CASE("prompt-only scope calls the hook for one pass") {
    const auto m = init_model(small_config(8));
    size_t calls = 0;
    const LayerHook count = [&](size_t, std::span<double>) { ++calls; };
    generate(m, "abc", 1, &count, HookScope::AllSteps);
    const size_t one_pass = calls;
    CHECK(one_pass == 4);
    calls = 0;
    generate(m, "abc", 6, &count, HookScope::PromptOnly);
    CHECK(calls == 4);
    calls = 0;
    generate(m, "abc", 6, &count, HookScope::AllSteps);
    CHECK(calls % 4 == 0);
    CHECK(calls >= 4);
    CHECK(calls <= 4 * 6);
}

}
