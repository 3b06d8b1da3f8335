#include "commentcav/probes.hpp"
#include "commentcav/util.hpp"

#include "java_corpus.hpp"
#include "synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

using namespace commentcav;
using testing::dot;
using testing::norm;

namespace {

LayerPairs layer_from(const testing::Clusters & c, size_t layer = 1) {
    LayerPairs lp;
    lp.layer = layer;
    for (size_t i = 0; i < c.pos.size(); ++i) {
        lp.ids.push_back("id" + std::to_string(i));
        lp.pos.push_back(c.pos[i]);
        lp.neg.push_back(c.neg[i]);
    }
    return lp;
}

} // namespace

TEST_SUITE("probes") {

TEST_CASE("separable 1-D data") {
    TrainOptions opt;
    opt.lambda = 0.0;
    opt.max_iter = 50;
    const auto r = train_probe({{1.0}, {2.0}}, {{-1.0}, {-2.0}}, opt);
    CHECK(r.probe.w[0] > 0.0);
    CHECK(accuracy(r.probe, testing::labeled({{1.0}, {2.0}}, {{-1.0}, {-2.0}})) == 1.0);
}

TEST_CASE("train_probe errors") {
    CHECK_THROWS_AS(train_probe({}, {{1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(train_probe({{1.0}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(train_probe({{1.0}}, {{1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("converges with default regularization") {
    const auto c = testing::gaussian_clusters(8, 1.0, 100, 3);
    const auto r = train_probe(c.pos, c.neg);
    CHECK(r.probe.converged);
    CHECK(r.gradient_norm <= 1e-6);
    CHECK(r.probe.train_size == 100);
}

TEST_CASE("non-convergence is flagged") {
    const auto c = testing::gaussian_clusters(8, 1.0, 100, 3);
    TrainOptions opt;
    opt.max_iter = 1;
    const auto r = train_probe(c.pos, c.neg, opt);
    CHECK_FALSE(r.probe.converged);
    CHECK(r.iterations == 1);
}

TEST_CASE("predict examples") {
    Probe p;
    p.w = {0.0, 0.0};
    CHECK(predict(p, std::vector<double>{3.0, -4.0}) == 0.5);
    p.w = {1.0, 0.0};
    CHECK(predict(p, std::vector<double>{std::log(99.0), 0.0}) == doctest::Approx(0.99).epsilon(1e-12));
    Probe q;
    q.w = {1.0};
    const double tiny = predict(q, std::vector<double>{-1000.0});
    CHECK(tiny > 0.0);
    CHECK(tiny <= 1e-300);
    CHECK(predict(q, std::vector<double>{1000.0}) < 1.0);
    CHECK_THROWS_AS(predict(q, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("negated probe complements") {
    SplitMix64 rng(4);
    for (int i = 0; i < 200; ++i) {
        Probe p, n;
        p.w = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
        p.b = rng.gaussian();
        n.w = {-p.w[0], -p.w[1], -p.w[2]};
        n.b = -p.b;
        std::vector<double> e = {rng.gaussian() * 3, rng.gaussian() * 3, rng.gaussian() * 3};
        CHECK(std::abs(predict(p, e) + predict(n, e) - 1.0) <= 1e-12);
    }
}

TEST_CASE("accuracy counting") {
    Probe p;
    p.w = {1.0};
    CHECK(accuracy(p, {{{1.0}, true}, {{-1.0}, false}}) == 1.0);
    CHECK(accuracy(p, {{{1.0}, false}, {{-1.0}, true}}) == 0.0);
    CHECK(accuracy(p, {{{1.0}, true}, {{2.0}, true}, {{-1.0}, false}, {{-2.0}, true}}) == 0.75);
    CHECK_THROWS_AS(accuracy(p, {}), std::invalid_argument);
}

TEST_CASE("cav") {
    Probe p;
    p.w = {3.0, 4.0};
    const auto v = cav(p).v;
    CHECK(v[0] == doctest::Approx(0.6));
    CHECK(v[1] == doctest::Approx(0.8));
    CHECK(dot(p.w, v) == doctest::Approx(5.0));
    Probe s = p;
    s.w = {30.0, 40.0};
    CHECK(cav(s).v[0] == doctest::Approx(0.6).epsilon(1e-15));
    p.w = {0.0, 0.0};
    CHECK_THROWS_AS(cav(p), std::invalid_argument);
}

TEST_CASE("monotone along the cav") {
    Probe p;
    p.w = {0.3, -1.2, 2.0};
    p.b = 0.1;
    const auto v = cav(p).v;
    std::vector<double> e = {0.5, 0.5, -0.5};
    double prev = -1.0;
    for (double t = -3.0; t <= 3.0; t += 0.25) {
        std::vector<double> x = {e[0] + t * v[0], e[1] + t * v[1], e[2] + t * v[2]};
        const double pr = predict(p, x);
        CHECK(pr > prev);
        prev = pr;
    }
}

TEST_CASE("label swap mirrors predictions") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const auto c = testing::gaussian_clusters(6, 0.7, 60, seed);
        const auto a = train_probe(c.pos, c.neg).probe;
        const auto b = train_probe(c.neg, c.pos).probe;
        for (const auto & x : c.pos) {
            CHECK(std::abs(predict(a, x) - (1.0 - predict(b, x))) <= 1e-9);
        }
    }
}

TEST_CASE("two-gaussian benchmark") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const auto train = testing::gaussian_clusters(16, 4.0, 200, seed);
        auto test = testing::gaussian_clusters(16, 4.0, 200, seed + 1000);
        // same mean direction for the held-out draw
        SplitMix64 rng(seed + 2000);
        test.pos.clear();
        test.neg.clear();
        for (int i = 0; i < 200; ++i) {
            Vector p(16), n(16);
            for (size_t k = 0; k < 16; ++k) {
                p[k] = 4.0 * train.mu_dir[k] + rng.gaussian();
                n[k] = -4.0 * train.mu_dir[k] + rng.gaussian();
            }
            test.pos.push_back(p);
            test.neg.push_back(n);
        }
        const auto probe = train_probe(train.pos, train.neg).probe;
        CHECK(accuracy(probe, testing::labeled(test.pos, test.neg)) >= 0.99);
        CHECK(dot(cav(probe).v, train.mu_dir) >= 0.95);
    }
}

TEST_CASE("identical distributions stay near chance") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const auto train = testing::identical_clusters(16, 200, seed);
        const auto test = testing::identical_clusters(16, 200, seed + 500);
        const auto probe = train_probe(train.pos, train.neg).probe;
        const double acc = accuracy(probe, testing::labeled(test.pos, test.neg));
        CHECK(acc >= 0.35);
        CHECK(acc <= 0.65);
    }
}

TEST_CASE("train size grid") {
    const auto g = train_size_grid(375);
    REQUIRE(g.size() == 8);
    CHECK(g.front() == 8);
    CHECK(g.back() == 375);
    CHECK(std::is_sorted(g.begin(), g.end()));
}

TEST_CASE("accuracy curve protocol") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = testing::gaussian_clusters(8, 1.5, 200, seed);
        const auto lp = layer_from(c, 3);
        const auto curve = accuracy_curve(lp, 100, seed);
        CHECK(curve.layer == 3);
        REQUIRE(curve.points.size() == 8);
        CHECK(curve.test_ids.size() == 100);
        CHECK(curve.points.back().train_size == 100);
        CHECK(curve.points.back().test_accuracy >= curve.points.front().test_accuracy - 0.05);
    }
}

TEST_CASE("curve and layer probe share the test set") {
    const auto c = testing::gaussian_clusters(8, 1.5, 120, 1);
    const auto lp = layer_from(c);
    const auto curve = accuracy_curve(lp, 60, 9);
    const auto probe = train_layer_probe(lp, ConceptKind::Inline, 60, 60, 9);
    CHECK(probe.test_accuracy == curve.points.back().test_accuracy);
    CHECK(probe.concept_kind == ConceptKind::Inline);
    CHECK(probe.train_size == 60);
    CHECK_THROWS_AS(accuracy_curve(lp, 100, 9), data_error);
}

TEST_CASE("median and dynamic threshold") {
    CHECK(median({0.5, 0.9, 0.7}) == 0.7);
    CHECK(median({0.6, 0.8}) == doctest::Approx(0.7));
    CHECK_THROWS_AS(median({}), std::invalid_argument);
    std::map<std::pair<std::string, std::string>, std::vector<double>> t;
    t[{"comment", "a"}] = {0.90};
    t[{"comment", "b"}] = {0.80, 0.84, 0.88};
    t[{"javadoc", "a"}] = {0.95, 0.95};
    CHECK(dynamic_threshold(t) == doctest::Approx(0.84));
    CHECK_THROWS_AS(dynamic_threshold({}), std::invalid_argument);
    t[{"x", "y"}] = {};
    CHECK_THROWS_AS(dynamic_threshold(t), std::invalid_argument);
}

TEST_CASE("probe store round trip") {
    const auto dir = testing::make_temp_dir("probes");
    Probe p;
    p.concept_kind = ConceptKind::Multiline;
    p.layer = 4;
    p.w = {0.1, -0.2, 1.0 / 3.0};
    p.b = -0.75;
    p.test_accuracy = 0.875;
    p.train_size = 12;
    p.converged = false;
    p.model_id = "toy";
    save_probe(p, dir);
    CHECK(probe_filename(ConceptKind::Multiline, 4) == "probe_multiline_L004.json");
    const auto back = load_probe(dir / "probe_multiline_L004.json");
    CHECK(back.w == p.w);
    CHECK(back.b == p.b);
    CHECK(back.layer == 4);
    CHECK(back.test_accuracy == 0.875);
    CHECK(back.converged == false);
    CHECK(back.model_id == "toy");

    Probe q = p;
    q.concept_kind = ConceptKind::Comment;
    q.layer = 2;
    save_probe(q, dir);
    CHECK(load_probe_store(dir).size() == 2);
    CHECK(load_probe_store(dir, ConceptKind::Comment).count(2) == 1);
    const auto tables = collect_accuracy_tables(dir);
    CHECK(tables.size() == 2);

    std::ofstream(dir / "probe_comment_L009.json") << "{\"concept\": \"comment\"}";
    CHECK_THROWS_AS(load_probe(dir / "probe_comment_L009.json"), data_error);
}

}
