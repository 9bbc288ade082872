#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dstok/fsq.hpp"
#include "dstok/optim.hpp"

#include <cmath>

using namespace dstok;

TEST_CASE("grid snapping: nearest level, ties to the lower index") {
    // N=4 grid {-1, -1/3, 1/3, 1}
    CHECK(grid_level(0.9f, 4) == 3);
    CHECK(grid_value(3, 4) == doctest::Approx(1.0f));
    // exact midpoint 0.0 between levels 1 and 2 snaps down
    CHECK(grid_level(0.0f, 4) == 1);
    CHECK(grid_value(1, 4) == doctest::Approx(-1.0f / 3.0f));
    // N=5 grid {-1,-0.5,0,0.5,1}: midpoints are exactly representable
    CHECK(grid_level(0.0f, 5) == 2);
    CHECK(grid_value(2, 5) == doctest::Approx(0.0f));
    CHECK(grid_level(0.25f, 5) == 2);  // tie -> lower
    CHECK(grid_level(-0.75f, 5) == 0); // tie -> lower
    CHECK(grid_level(0.2500001f, 5) == 3);
    CHECK(grid_level(0.2499999f, 5) == 2);
}

TEST_CASE("quantize applies the tanh bound before snapping") {
    FsqConfig cfg;
    cfg.levels = 4;
    cfg.channels = 1;
    std::vector<float> q;
    FsqCode code = fsq_quantize({std::atanh(0.9f)}, cfg, &q);
    CHECK(code.levels_per_layer[0][0] == 3);
    CHECK(q[0] == doctest::Approx(1.0f));
    code = fsq_quantize({0.0f}, cfg, &q);
    CHECK(code.levels_per_layer[0][0] == 1);
    CHECK(q[0] == doctest::Approx(-1.0f / 3.0f));
}

TEST_CASE("mixed-radix flat index") {
    // N=3, C=2, levels (2,1) -> 2 + 1*3 = 5
    CHECK(fsq_flat_from_levels({2, 1}, 3) == 5);
    FsqConfig cfg;
    cfg.levels = 3;
    cfg.channels = 2;
    CHECK(fsq_levels_from_flat(5, cfg) == std::vector<int>{2, 1});
}

TEST_CASE("dequantize endpoints") {
    FsqConfig cfg;
    cfg.levels = 4;
    cfg.channels = 3;
    const auto lo = fsq_dequantize(0, cfg);
    for (float v : lo) CHECK(v == doctest::Approx(-1.0f));
    const auto hi = fsq_dequantize(cfg.codebook_size() - 1, cfg);
    for (float v : hi) CHECK(v == doctest::Approx(1.0f));
    CHECK_THROWS_AS(fsq_dequantize(cfg.codebook_size(), cfg), dstok::error);
    CHECK_THROWS_AS(fsq_dequantize(-1, cfg), dstok::error);
}

TEST_CASE("bijection: quantize(dequantize(i)).flat = i for every code (N=4, C=3)") {
    FsqConfig cfg;
    cfg.levels = 4;
    cfg.channels = 3;
    for (int64_t i = 0; i < cfg.codebook_size(); ++i) {
        const std::vector<float> grid = fsq_dequantize(i, cfg);
        FsqCode code = fsq_quantize(grid, cfg); // tanh shrink stays inside each cell for N=4
        CHECK(code.flat_per_layer[0] == i);
        std::vector<float> q;
        fsq_quantize(grid, cfg, &q);
        for (size_t c = 0; c < grid.size(); ++c) CHECK(q[c] == grid[c]);
    }
}

TEST_CASE("straight-through gradient equals the identity-path gradient") {
    Rng rng(0);
    Tensor x = Tensor::randn({3, 4}, rng, 0.8f, true);
    Tensor r = Tensor::randn({3, 4}, rng, 1.0f);
    // through the quantizer
    Graph g1;
    Tensor q = round_grid_ste(g1, tanh_op(g1, x), 4);
    g1.backward(reduce_sum_all(g1, mul(g1, q, r)));
    std::vector<float> g_q = x.grad_vec();
    // quantizer replaced by identity
    x.zero_grad();
    Graph g2;
    Tensor y = tanh_op(g2, x);
    g2.backward(reduce_sum_all(g2, mul(g2, y, r)));
    std::vector<float> g_id = x.grad_vec();
    REQUIRE(g_q.size() == g_id.size());
    for (size_t i = 0; i < g_q.size(); ++i) CHECK(std::fabs(g_q[i] - g_id[i]) < 1e-6f);
}

TEST_CASE("composite d/dx tanh then STE at x=0 is 1") {
    Tensor x = Tensor::scalar(0.0f);
    x.set_requires_grad(true);
    Graph g;
    Tensor q = round_grid_ste(g, tanh_op(g, x), 4);
    g.backward(reduce_sum_all(g, q));
    CHECK(x.grad()[0] == doctest::Approx(1.0f));
}

TEST_CASE("gradient steps through the quantizer move tanh(x) to the target cell") {
    // 1-d toy: minimize (quantize(x) - 1)^2; STE keeps the signal alive
    Tensor x = Tensor::scalar(0.2f);
    x.set_requires_grad(true);
    for (int step = 0; step < 100; ++step) {
        x.zero_grad();
        Graph g;
        Tensor q = round_grid_ste(g, tanh_op(g, x), 4);
        Tensor err = add_const(g, q, -1.0f);
        g.backward(reduce_sum_all(g, mul(g, err, err)));
        x.set(0, x.at(0) - 0.1f * x.grad()[0]);
    }
    CHECK(grid_level(std::tanh(x.at(0)), 4) == 3);
}

TEST_CASE("stacked quantization") {
    FsqConfig cfg1;
    cfg1.levels = 4;
    cfg1.channels = 4;
    cfg1.layers = 1;
    FsqConfig cfg2 = cfg1;
    cfg2.layers = 2;
    Rng rng(1);

    SUBCASE("L=1 equals plain quantize") {
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<float> pre((size_t)cfg1.channels);
            for (auto & v : pre) v = rng.normal_f();
            std::vector<float> qa, qb;
            FsqCode a = fsq_quantize(pre, cfg1, &qa);
            FsqCode b = fsq_stack_quantize(pre, cfg1, &qb);
            CHECK(a.flat_per_layer == b.flat_per_layer);
            CHECK(qa == qb);
        }
    }

    SUBCASE("residual after layer 1 is at most the grid half-step") {
        const float half_step = 1.0f / 3.0f; // N=4 spacing 2/3
        for (int rep = 0; rep < 100; ++rep) {
            std::vector<float> pre((size_t)cfg2.channels);
            for (auto & v : pre) v = rng.normal_f();
            std::vector<float> q1;
            fsq_quantize(pre, cfg2, &q1);
            for (int c = 0; c < cfg2.channels; ++c) {
                const float residual = std::tanh(pre[(size_t)c]) - q1[(size_t)c];
                CHECK(std::fabs(residual) <= half_step + 1e-6f);
            }
        }
    }

    SUBCASE("zero input: layer 1 takes the tie rule, layer 2 quantizes the residual") {
        std::vector<float> pre((size_t)cfg2.channels, 0.0f);
        std::vector<float> q;
        FsqCode code = fsq_stack_quantize(pre, cfg2, &q);
        REQUIRE(code.levels_per_layer.size() == 2);
        for (int c = 0; c < cfg2.channels; ++c) {
            CHECK(code.levels_per_layer[0][(size_t)c] == 1); // tie at 0 -> lower level
            // residual = 0 - (-1/3) = 1/3, tanh(1/3)=0.3215 -> level 2 (value 1/3)
            CHECK(code.levels_per_layer[1][(size_t)c] == 2);
            CHECK(q[(size_t)c] == doctest::Approx(0.0f).epsilon(1e-6));
        }
    }

    SUBCASE("graph fsq_forward ids match the scalar path") {
        Tensor pre = Tensor::randn({6, 4}, rng, 1.0f);
        Graph g(false);
        std::vector<std::vector<int64_t>> ids;
        Tensor q = fsq_forward(g, pre, cfg2, &ids);
        REQUIRE(ids.size() == 2);
        for (int t = 0; t < 6; ++t) {
            std::vector<float> row((size_t)cfg2.channels);
            for (int c = 0; c < cfg2.channels; ++c) row[(size_t)c] = pre.at((int64_t)t * 4 + c);
            std::vector<float> qs;
            FsqCode code = fsq_stack_quantize(row, cfg2, &qs);
            CHECK(ids[0][(size_t)t] == code.flat_per_layer[0]);
            CHECK(ids[1][(size_t)t] == code.flat_per_layer[1]);
            for (int c = 0; c < cfg2.channels; ++c)
                CHECK(q.at((int64_t)t * 4 + c) == doctest::Approx(qs[(size_t)c]).epsilon(1e-6));
        }
    }
}

TEST_CASE("fsq_forward gradient is straight-through (fd check)") {
    Rng rng(2);
    Tensor pre = Tensor::randn({4, 5}, rng, 0.7f);
    Tensor r = Tensor::randn({4, 5}, rng, 1.0f);
    FsqConfig cfg;
    cfg.levels = 4;
    cfg.channels = 5;
    // STE makes the quantizer transparent, so AD-vs-FD will not match through
    // the discontinuity itself; instead compare the AD gradient against the
    // identity-path AD gradient (exact STE contract)
    Graph g1;
    pre.set_requires_grad(true);
    Tensor q = fsq_forward(g1, pre, cfg);
    g1.backward(reduce_sum_all(g1, mul(g1, q, r)));
    std::vector<float> g_q = pre.grad_vec();
    pre.zero_grad();
    Graph g2;
    Tensor y = tanh_op(g2, pre);
    g2.backward(reduce_sum_all(g2, mul(g2, y, r)));
    std::vector<float> g_id = pre.grad_vec();
    for (size_t i = 0; i < g_q.size(); ++i) CHECK(std::fabs(g_q[i] - g_id[i]) < 1e-6f);
}
