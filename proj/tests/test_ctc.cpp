#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dstok/ctc.hpp"
#include "dstok/optim.hpp"

#include <chrono>
#include <cmath>

using namespace dstok;

// independent oracle: enumerate every alignment path and sum the
// probabilities of those that collapse to the target
static double ctc_brute_force(const Tensor & log_probs, const std::vector<int> & target, int blank) {
    const int t = log_probs.dim(0);
    const int v = log_probs.dim(1);
    double total = 0.0;
    std::vector<int> path((size_t)t, 0);
    while (true) {
        // collapse: merge repeats, then drop blanks
        std::vector<int> collapsed;
        int prev = -1;
        for (int i = 0; i < t; ++i) {
            if (path[(size_t)i] != prev && path[(size_t)i] != blank) collapsed.push_back(path[(size_t)i]);
            prev = path[(size_t)i];
        }
        if (collapsed == target) {
            double lp = 0.0;
            for (int i = 0; i < t; ++i) lp += (double)log_probs.at((int64_t)i * v + path[(size_t)i]);
            total += std::exp(lp);
        }
        // next path in lexicographic order
        int pos = t - 1;
        while (pos >= 0 && path[(size_t)pos] == v - 1) path[(size_t)pos--] = 0;
        if (pos < 0) break;
        path[(size_t)pos] += 1;
    }
    return -std::log(total);
}

static Tensor uniform_log_probs(int t, int v) {
    return Tensor::full({t, v}, std::log(1.0f / (float)v));
}

static Tensor random_log_probs(int t, int v, Rng & rng) {
    Tensor logits = Tensor::randn({t, v}, rng, 1.0f);
    Graph g(false);
    return log_softmax_rows(g, logits);
}

TEST_CASE("hand-worked case: T=2, vocab {a,blank}, uniform, target a") {
    // alignments {aa, a-, -a}: P = 3 * 0.25, loss = -ln 0.75
    Graph g(false);
    Tensor lp = uniform_log_probs(2, 2);
    Tensor loss = ctc_loss(g, lp, {0}, 1);
    CHECK(loss.item() == doctest::Approx(-std::log(0.75)).epsilon(1e-6));
    CHECK(loss.item() == doctest::Approx(0.2877).epsilon(1e-3));
}

TEST_CASE("matches brute-force enumeration for all small cases") {
    const auto t0 = std::chrono::steady_clock::now();
    int cases = 0;
    Rng rng(0);
    for (int vocab = 2; vocab <= 3; ++vocab) {
        const int blank = vocab - 1;
        for (int t = 1; t <= 4; ++t) {
            // all targets of length 1..2 over the non-blank symbols
            std::vector<std::vector<int>> targets;
            for (int a = 0; a < blank; ++a) {
                targets.push_back({a});
                for (int b = 0; b < blank; ++b) targets.push_back({a, b});
            }
            for (const auto & target : targets) {
                if (t < ctc_min_frames(target)) continue;
                for (int rep = 0; rep < 3; ++rep) {
                    Tensor lp = random_log_probs(t, vocab, rng);
                    Graph g(false);
                    const double got = ctc_loss(g, lp, target, blank).item_precise();
                    const double expect = ctc_brute_force(lp, target, blank);
                    REQUIRE(std::fabs(got - expect) < 1e-6);
                    ++cases;
                }
            }
        }
    }
    CHECK(cases >= 50);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 1.0);
}

TEST_CASE("empty target is rejected") {
    Graph g(false);
    Tensor lp = uniform_log_probs(3, 2);
    CHECK_THROWS_AS(ctc_loss(g, lp, {}, 1), dstok::error);
}

TEST_CASE("infeasible targets are a defined error, not -inf") {
    Graph g(false);
    Tensor lp = uniform_log_probs(2, 2);
    // "aa" needs at least 3 frames (a, blank, a)
    CHECK(ctc_min_frames({0, 0}) == 3);
    CHECK_THROWS_AS(ctc_loss(g, lp, {0, 0}, 1), dstok::error);
}

TEST_CASE("unnormalized rows are rejected") {
    Graph g(false);
    Tensor lp = Tensor::full({2, 2}, -0.1f);
    CHECK_THROWS_AS(ctc_loss(g, lp, {0}, 1), dstok::error);
}

TEST_CASE("gradient passes the finite-difference check") {
    for (uint64_t seed : {0ull, 1ull, 2ull}) {
        Rng rng(seed);
        Tensor logits = Tensor::randn({5, 4}, rng, 1.0f);
        const std::vector<int> target = {0, 2, 1};
        const double err = finite_difference_check(
            [&](Graph & g) {
                Tensor lp = log_softmax_rows(g, logits);
                return ctc_loss(g, lp, target, 3);
            },
            {logits});
        CHECK(err < 1e-3);
    }
}

TEST_CASE("greedy decode collapses repeats then strips blanks") {
    // frames argmax: a a - a b b -> a a b
    Tensor lp = Tensor::full({6, 3}, -10.0f);
    auto set_best = [&](int t, int v) { lp.set((int64_t)t * 3 + v, -0.1f); };
    set_best(0, 0);
    set_best(1, 0);
    set_best(2, 2);
    set_best(3, 0);
    set_best(4, 1);
    set_best(5, 1);
    CHECK(ctc_greedy_decode(lp, 2) == std::vector<int>{0, 0, 1});
}
