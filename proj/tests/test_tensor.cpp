#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dstok/kernels.hpp"
#include "dstok/ops.hpp"
#include "dstok/optim.hpp"

#include <cmath>

using namespace dstok;

TEST_CASE("backward of x*x at x=3 gives 6") {
    Tensor x = Tensor::scalar(3.0f);
    x.set_requires_grad(true);
    Graph g;
    Tensor y = mul(g, x, x);
    g.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(6.0f));
}

TEST_CASE("disconnected leaf receives zero gradient") {
    Rng rng(0);
    Tensor x = Tensor::randn({4}, rng, 1.0f, true);
    Tensor p = Tensor::randn({4}, rng, 1.0f, true);
    Graph g;
    Tensor loss = reduce_sum_all(g, mul(g, x, x));
    g.backward(loss);
    CHECK(!p.has_grad());
    const auto & gz = p.grad_vec();
    for (float v : gz) CHECK(v == 0.0f);
}

TEST_CASE("backward requires scalar loss") {
    Tensor x = Tensor::zeros({2, 2}, true);
    Graph g;
    Tensor y = add_const(g, x, 1.0f);
    CHECK_THROWS_AS(g.backward(y), dstok::error);
}

TEST_CASE("backward rejects non-finite loss") {
    Tensor x = Tensor::scalar(std::numeric_limits<float>::infinity());
    x.set_requires_grad(true);
    Graph g;
    Tensor y = add_const(g, x, 1.0f);
    CHECK_THROWS_AS(g.backward(y), dstok::error);
}

TEST_CASE("fd check: tanh of linear layer, random 4x4") {
    Rng rng(0);
    Tensor w = Tensor::randn({4, 4}, rng, 0.5f);
    Tensor x = Tensor::randn({4, 4}, rng, 1.0f);
    const double err = finite_difference_check(
        [&](Graph & g) { return reduce_sum_all(g, tanh_op(g, matmul(g, w, x))); }, {w}, 1e-3f);
    CHECK(err < 1e-3);
}

TEST_CASE("fd check: linear map is near-exact") {
    // values on a power-of-two grid so the f32 arithmetic is exact and the
    // central difference carries no rounding noise at all
    Rng rng(1);
    Tensor w(Shape{3, 5});
    Tensor x(Shape{5, 2});
    for (int64_t i = 0; i < w.numel(); ++i) w.set(i, (float)rng.uniform_int(-128, 128) / 64.0f);
    for (int64_t i = 0; i < x.numel(); ++i) x.set(i, (float)rng.uniform_int(-128, 128) / 64.0f);
    const double err = finite_difference_check(
        [&](Graph & g) { return reduce_sum_all(g, matmul(g, w, x)); }, {w}, 0x1.0p-10f);
    CHECK(err < 1e-6);
}

static double fd_unary(Tensor (*op)(Graph &, const Tensor &), uint64_t seed, float in_scale) {
    Rng rng(seed);
    Tensor x = Tensor::randn({3, 7}, rng, in_scale);
    Tensor r = Tensor::randn({3, 7}, rng, 1.0f);
    return finite_difference_check(
        [&](Graph & g) { return reduce_sum_all(g, mul(g, op(g, x), r)); }, {x}, 1e-3f);
}

TEST_CASE("fd check: every unary primitive, seeds 0..2") {
    for (uint64_t seed : {0ull, 1ull, 2ull}) {
        CHECK(fd_unary(&tanh_op, seed, 1.0f) < 1e-3);
        CHECK(fd_unary(&sigmoid_op, seed, 1.0f) < 1e-3);
        CHECK(fd_unary(&gelu_op, seed, 1.0f) < 1e-3);
        CHECK(fd_unary(&elu_op, seed, 1.0f) < 1e-3);
        CHECK(fd_unary(&softmax_rows, seed, 1.0f) < 1e-3);
        CHECK(fd_unary(&log_softmax_rows, seed, 1.0f) < 1e-3);
    }
}

TEST_CASE("fd check: binary, broadcast, reductions, norm, interp") {
    for (uint64_t seed : {0ull, 1ull, 2ull}) {
        Rng rng(seed);
        Tensor a = Tensor::randn({4, 6}, rng, 1.0f);
        Tensor b = Tensor::randn({4, 6}, rng, 1.0f);
        Tensor row = Tensor::randn({6}, rng, 1.0f);
        Tensor gamma = Tensor::randn({6}, rng, 0.3f);
        Tensor beta = Tensor::randn({6}, rng, 0.3f);
        Tensor r = Tensor::randn({4, 6}, rng, 1.0f);
        Tensor r9 = Tensor::randn({9, 6}, rng, 1.0f);

        auto weighted = [&](Graph & g, Tensor y) { return reduce_sum_all(g, mul(g, y, r)); };

        CHECK(finite_difference_check([&](Graph & g) { return weighted(g, add(g, a, b)); }, {a, b}) < 1e-3);
        CHECK(finite_difference_check([&](Graph & g) { return weighted(g, mul(g, a, b)); }, {a, b}) < 1e-3);
        CHECK(finite_difference_check([&](Graph & g) { return weighted(g, sub(g, a, row)); }, {a, row}) < 1e-3);
        CHECK(finite_difference_check([&](Graph & g) { return weighted(g, mul(g, a, row)); }, {a, row}) < 1e-3);
        CHECK(finite_difference_check(
                  [&](Graph & g) { return weighted(g, layer_norm(g, a, gamma, beta)); },
                  {a, gamma, beta}) < 1e-3);
        CHECK(finite_difference_check(
                  [&](Graph & g) { return weighted(g, layer_norm(g, a, Tensor(), Tensor())); }, {a}) < 1e-3);
        CHECK(finite_difference_check(
                  [&](Graph & g) {
                      return reduce_sum_all(g, mul(g, interp_linear_rows(g, a, 9), r9));
                  },
                  {a}) < 1e-3);
        CHECK(finite_difference_check(
                  [&](Graph & g) { return reduce_mean_all(g, mul(g, a, a)); }, {a}) < 1e-3);
        CHECK(finite_difference_check(
                  [&](Graph & g) {
                      Tensor cs = colsum(g, a);
                      return reduce_sum_all(g, mul(g, cs, cs));
                  },
                  {a}) < 1e-3);
    }
}

TEST_CASE("fd check: slicing and concatenation") {
    Rng rng(0);
    Tensor a = Tensor::randn({5, 4}, rng, 1.0f);
    Tensor b = Tensor::randn({5, 3}, rng, 1.0f);
    Tensor r = Tensor::randn({5, 7}, rng, 1.0f);
    CHECK(finite_difference_check(
              [&](Graph & g) {
                  Tensor cat = concat_cols(g, a, b);
                  return reduce_sum_all(g, mul(g, cat, r));
              },
              {a, b}) < 1e-3);
    CHECK(finite_difference_check(
              [&](Graph & g) {
                  Tensor s = slice_rows(g, a, 1, 4);
                  return reduce_sum_all(g, mul(g, s, s));
              },
              {a}) < 1e-3);
    CHECK(finite_difference_check(
              [&](Graph & g) {
                  Tensor cat = concat_rows(g, {a, a});
                  return reduce_sum_all(g, mul(g, cat, cat));
              },
              {a}) < 1e-3);
}

TEST_CASE("fd check: conv1d layer on random 8-frame input") {
    for (uint64_t seed : {0ull, 1ull, 2ull}) {
        Rng rng(seed);
        Tensor x = Tensor::randn({8, 3}, rng, 1.0f);
        Tensor w = Tensor::randn({5, 3, 3}, rng, 0.5f);
        Tensor b = Tensor::randn({5}, rng, 0.5f);
        Tensor r = Tensor::randn({4, 5}, rng, 1.0f);
        const double err = finite_difference_check(
            [&](Graph & g) {
                Tensor y = conv1d(g, x, w, b, 2, 1);
                return reduce_sum_all(g, mul(g, y, r));
            },
            {x, w, b});
        CHECK(err < 1e-3);
    }
}

TEST_CASE("fd check: transpose conv1d") {
    for (uint64_t seed : {0ull, 1ull, 2ull}) {
        Rng rng(seed);
        Tensor x = Tensor::randn({5, 3}, rng, 1.0f);
        Tensor w = Tensor::randn({3, 4, 4}, rng, 0.5f);
        Tensor b = Tensor::randn({4}, rng, 0.5f);
        const double err = finite_difference_check(
            [&](Graph & g) {
                Tensor y = convtr1d(g, x, w, b, 2, 1);
                return reduce_sum_all(g, mul(g, y, y));
            },
            {x, w, b});
        CHECK(err < 1e-3);
    }
}

TEST_CASE("fd check: attention block with rope, 4 frames") {
    for (uint64_t seed : {0ull, 1ull, 2ull}) {
        Rng rng(seed);
        Tensor q = Tensor::randn({4, 8}, rng, 1.0f);
        Tensor k = Tensor::randn({6, 8}, rng, 1.0f);
        Tensor v = Tensor::randn({6, 8}, rng, 1.0f);
        Tensor r = Tensor::randn({4, 8}, rng, 1.0f);
        AttentionSpec spec;
        spec.heads = 2;
        spec.k_pos0 = 3;
        const double err = finite_difference_check(
            [&](Graph & g) {
                Tensor o = attention(g, q, k, v, spec);
                return reduce_sum_all(g, mul(g, o, r));
            },
            {q, k, v});
        CHECK(err < 1e-3);
    }
}

TEST_CASE("fd check: masked softmax, cosine, nll, sqrt, embedding") {
    Rng rng(2);
    Tensor s = Tensor::randn({6, 3}, rng, 1.0f);
    Tensor a = Tensor::randn({8}, rng, 1.0f);
    Tensor b = Tensor::randn({8}, rng, 1.0f);
    Tensor table = Tensor::randn({5, 4}, rng, 1.0f);
    Tensor r = Tensor::randn({6, 3}, rng, 1.0f);
    CHECK(finite_difference_check(
              [&](Graph & g) {
                  Tensor al = masked_softmax_time(g, s, 4);
                  return reduce_sum_all(g, mul(g, al, r));
              },
              {s}) < 1e-3);
    CHECK(finite_difference_check([&](Graph & g) { return cosine_sim(g, a, b); }, {a, b}) < 1e-3);
    CHECK(finite_difference_check(
              [&](Graph & g) {
                  Tensor lp = log_softmax_rows(g, a);
                  return nll_index(g, lp, 3);
              },
              {a}) < 1e-3);
    CHECK(finite_difference_check(
              [&](Graph & g) {
                  Tensor sq = mul(g, a, a);
                  return reduce_sum_all(g, sqrt_op(g, add_const(g, sq, 0.5f)));
              },
              {a}) < 1e-3);
    std::vector<int> ids = {0, 3, 3, 1};
    Tensor r4 = Tensor::randn({4, 4}, rng, 1.0f);
    CHECK(finite_difference_check(
              [&](Graph & g) {
                  Tensor e = embedding(g, table, ids);
                  return reduce_sum_all(g, mul(g, e, r4));
              },
              {table}) < 1e-3);
}

TEST_CASE("fd check: mse over a frame range") {
    Rng rng(0);
    Tensor p = Tensor::randn({6, 4}, rng, 1.0f);
    Tensor t = Tensor::randn({6, 4}, rng, 1.0f);
    CHECK(finite_difference_check([&](Graph & g) { return mse_frames(g, p, t, 2, 6); }, {p}) < 1e-3);
    Graph g;
    CHECK_THROWS_AS(mse_frames(g, p, t, 6, 6), dstok::error);
}

TEST_CASE("backward is deterministic: identical graphs give bit-identical gradients") {
    auto run = [](std::vector<float> & out) {
        Rng rng(7);
        Tensor x = Tensor::randn({6, 6}, rng, 1.0f, true);
        Tensor w = Tensor::randn({6, 6}, rng, 1.0f, true);
        Graph g;
        Tensor y = tanh_op(g, matmul(g, x, w));
        Tensor l = reduce_mean_all(g, mul(g, y, y));
        g.backward(l);
        out = w.grad_vec();
    };
    std::vector<float> g1, g2;
    run(g1);
    run(g2);
    REQUIRE(g1.size() == g2.size());
    for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("adamw: first step moves by -lr for nonzero gradient") {
    AdamWConfig cfg;
    cfg.lr = 0.1f;
    cfg.weight_decay = 0.0f;
    cfg.warmup_steps = 0;
    ParamMap pm;
    Tensor p = Tensor::scalar(1.0f);
    p.set_requires_grad(true);
    pm.add("p", p);
    AdamW opt(cfg, pm);
    p.grad()[0] = 0.5f;
    opt.step();
    CHECK(p.item() == doctest::Approx(1.0f - 0.1f).epsilon(1e-5));
}

TEST_CASE("adamw: zero gradient and zero decay leaves params unchanged") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.0f;
    cfg.warmup_steps = 0;
    ParamMap pm;
    Tensor p = Tensor::from({3}, {1.0f, -2.0f, 3.0f});
    p.set_requires_grad(true);
    pm.add("p", p);
    AdamW opt(cfg, pm);
    opt.step();
    CHECK(p.at(0) == 1.0f);
    CHECK(p.at(1) == -2.0f);
    CHECK(p.at(2) == 3.0f);
}

TEST_CASE("adamw: decoupled decay only") {
    AdamWConfig cfg;
    cfg.lr = 0.1f;
    cfg.weight_decay = 0.1f;
    cfg.warmup_steps = 0;
    ParamMap pm;
    Tensor p = Tensor::scalar(2.0f);
    p.set_requires_grad(true);
    pm.add("p", p);
    AdamW opt(cfg, pm);
    opt.step();
    CHECK(p.item() == doctest::Approx(2.0f * (1.0f - 0.01f)).epsilon(1e-6));
}

TEST_CASE("adamw: lr=0 is the identity") {
    AdamWConfig cfg;
    cfg.lr = 0.0f;
    cfg.warmup_steps = 0;
    ParamMap pm;
    Tensor p = Tensor::from({2}, {0.5f, -0.25f});
    p.set_requires_grad(true);
    pm.add("p", p);
    AdamW opt(cfg, pm);
    p.grad()[0] = 1.0f;
    p.grad()[1] = -2.0f;
    opt.step();
    CHECK(p.at(0) == 0.5f);
    CHECK(p.at(1) == -0.25f);
}

TEST_CASE("kernels: parallel variants are bit-identical to serial") {
    Rng rng(3);
    auto fill = [&](std::vector<float> & v) {
        for (auto & x : v) x = rng.normal_f();
    };
    SUBCASE("matmul all transpose combos") {
        const int m = 17, k = 23, n = 13;
        std::vector<float> a((size_t)m * k), b((size_t)k * n), at((size_t)m * k), bt((size_t)k * n);
        fill(a);
        fill(b);
        fill(at);
        fill(bt);
        for (int ta = 0; ta < 2; ++ta)
            for (int tb = 0; tb < 2; ++tb) {
                std::vector<float> c1((size_t)m * n), c2((size_t)m * n);
                const float * pa = ta ? at.data() : a.data();
                const float * pb = tb ? bt.data() : b.data();
                kernels::matmul_serial(pa, pb, c1.data(), m, k, n, ta, tb, false);
                kernels::matmul_parallel(pa, pb, c2.data(), m, k, n, ta, tb, false);
                for (size_t i = 0; i < c1.size(); ++i) REQUIRE(c1[i] == c2[i]);
            }
    }
    SUBCASE("conv1d forward and gradients") {
        const int t = 19, cin = 5, cout = 7, kernel = 5, stride = 2, pad = 2;
        const int to = kernels::conv1d_out_len(t, kernel, stride, pad);
        std::vector<float> x((size_t)t * cin), w((size_t)cout * kernel * cin), bias(cout),
            dy((size_t)to * cout);
        fill(x);
        fill(w);
        fill(bias);
        fill(dy);
        std::vector<float> y1((size_t)to * cout), y2((size_t)to * cout);
        kernels::conv1d_serial(x.data(), w.data(), bias.data(), y1.data(), t, cin, cout, kernel, stride, pad);
        kernels::conv1d_parallel(x.data(), w.data(), bias.data(), y2.data(), t, cin, cout, kernel, stride, pad);
        for (size_t i = 0; i < y1.size(); ++i) REQUIRE(y1[i] == y2[i]);
        std::vector<float> dx1((size_t)t * cin, 0.0f), dx2((size_t)t * cin, 0.0f);
        kernels::conv1d_grad_x_serial(dy.data(), w.data(), dx1.data(), t, cin, cout, kernel, stride, pad);
        kernels::conv1d_grad_x_parallel(dy.data(), w.data(), dx2.data(), t, cin, cout, kernel, stride, pad);
        for (size_t i = 0; i < dx1.size(); ++i) REQUIRE(dx1[i] == dx2[i]);
        std::vector<float> dw1(w.size(), 0.0f), dw2(w.size(), 0.0f), db1(cout, 0.0f), db2(cout, 0.0f);
        kernels::conv1d_grad_w_serial(dy.data(), x.data(), dw1.data(), db1.data(), t, cin, cout, kernel, stride, pad);
        kernels::conv1d_grad_w_parallel(dy.data(), x.data(), dw2.data(), db2.data(), t, cin, cout, kernel, stride, pad);
        for (size_t i = 0; i < dw1.size(); ++i) REQUIRE(dw1[i] == dw2[i]);
        for (size_t i = 0; i < db1.size(); ++i) REQUIRE(db1[i] == db2[i]);
    }
    SUBCASE("transpose conv forward and gradients") {
        const int t = 11, cin = 6, cout = 4, kernel = 4, stride = 2, pad = 1;
        const int to = kernels::convtr1d_out_len(t, kernel, stride, pad);
        std::vector<float> x((size_t)t * cin), w((size_t)cin * kernel * cout), bias(cout),
            dy((size_t)to * cout);
        fill(x);
        fill(w);
        fill(bias);
        fill(dy);
        std::vector<float> y1((size_t)to * cout), y2((size_t)to * cout);
        kernels::convtr1d_serial(x.data(), w.data(), bias.data(), y1.data(), t, cin, cout, kernel, stride, pad);
        kernels::convtr1d_parallel(x.data(), w.data(), bias.data(), y2.data(), t, cin, cout, kernel, stride, pad);
        for (size_t i = 0; i < y1.size(); ++i) REQUIRE(y1[i] == y2[i]);
        std::vector<float> dx1((size_t)t * cin, 0.0f), dx2((size_t)t * cin, 0.0f);
        kernels::convtr1d_grad_x_serial(dy.data(), w.data(), dx1.data(), t, cin, cout, kernel, stride, pad);
        kernels::convtr1d_grad_x_parallel(dy.data(), w.data(), dx2.data(), t, cin, cout, kernel, stride, pad);
        for (size_t i = 0; i < dx1.size(); ++i) REQUIRE(dx1[i] == dx2[i]);
        std::vector<float> dw1(w.size(), 0.0f), dw2(w.size(), 0.0f), db1(cout, 0.0f), db2(cout, 0.0f);
        kernels::convtr1d_grad_w_serial(dy.data(), x.data(), dw1.data(), db1.data(), t, cin, cout, kernel, stride, pad);
        kernels::convtr1d_grad_w_parallel(dy.data(), x.data(), dw2.data(), db2.data(), t, cin, cout, kernel, stride, pad);
        for (size_t i = 0; i < dw1.size(); ++i) REQUIRE(dw1[i] == dw2[i]);
        for (size_t i = 0; i < db1.size(); ++i) REQUIRE(db1[i] == db2[i]);
    }
    SUBCASE("softmax rows") {
        const int rows = 33, cols = 29;
        std::vector<float> x((size_t)rows * cols), y1(x.size()), y2(x.size());
        fill(x);
        kernels::softmax_rows_serial(x.data(), y1.data(), rows, cols);
        kernels::softmax_rows_parallel(x.data(), y2.data(), rows, cols);
        for (size_t i = 0; i < y1.size(); ++i) REQUIRE(y1[i] == y2[i]);
    }
}

TEST_CASE("rng: deterministic and serializable") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
    uint64_t st[6];
    a.save_state(st);
    Rng c(0);
    c.load_state(st);
    for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == c.normal());
}
