#include "dstok/ops.hpp"

#include "dstok/kernels.hpp"

#include <cmath>

namespace dstok {

namespace {

enum class bcast { same, scalar, row };

bcast bcast_kind(const Tensor & a, const Tensor & b, const char * op) {
    if (a.numel() == b.numel() && a.cols() == b.cols()) return bcast::same;
    if (b.numel() == 1) return bcast::scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return bcast::row;
    fail("%s: shapes %s and %s are not compatible", op, shape_str(a.shape()).c_str(),
         shape_str(b.shape()).c_str());
}

bool track(Graph & g, std::initializer_list<const Tensor *> ins) {
    if (!g.recording()) return false;
    for (const Tensor * t : ins) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

// elementwise binary with the restricted broadcast rules
template <typename Fwd, typename BwdA, typename BwdB>
Tensor ew_binary(Graph & g, const Tensor & a, const Tensor & b, const char * name,
                 Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
    const bcast kind = bcast_kind(a, b, name);
    Tensor out(a.shape());
    const int64_t n = a.numel();
    const int cols = a.cols();
    const float * pa = a.data();
    const float * pb = b.data();
    float * po = out.data();
    for (int64_t i = 0; i < n; ++i) {
        const float bv = kind == bcast::same ? pb[i] : (kind == bcast::scalar ? pb[0] : pb[i % cols]);
        po[i] = fwd(pa[i], bv);
    }
    if (track(g, {&a, &b})) {
        out.set_requires_grad(true);
        Tensor ta = a, tb = b;
        g.record([ta, tb, out, kind, n, cols, fwd, bwd_a, bwd_b]() mutable {
            if (!out.has_grad()) return;
            const float * d = out.grad();
            const float * pa = ta.data();
            const float * pb = tb.data();
            if (ta.requires_grad()) {
                float * ga = ta.grad();
                for (int64_t i = 0; i < n; ++i) {
                    const float bv = kind == bcast::same ? pb[i] : (kind == bcast::scalar ? pb[0] : pb[i % cols]);
                    ga[i] += d[i] * bwd_a(pa[i], bv);
                }
            }
            if (tb.requires_grad()) {
                float * gb = tb.grad();
                for (int64_t i = 0; i < n; ++i) {
                    const float bv = kind == bcast::same ? pb[i] : (kind == bcast::scalar ? pb[0] : pb[i % cols]);
                    const float gi = d[i] * bwd_b(pa[i], bv);
                    const int64_t j = kind == bcast::same ? i : (kind == bcast::scalar ? 0 : i % cols);
                    gb[j] += gi;
                }
            }
        });
    }
    return out;
}

template <typename Fwd, typename Bwd>
Tensor ew_unary(Graph & g, const Tensor & a, const char * /*name*/, Fwd fwd, Bwd bwd) {
    Tensor out(a.shape());
    const int64_t n = a.numel();
    const float * pa = a.data();
    float * po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
    if (track(g, {&a})) {
        out.set_requires_grad(true);
        Tensor ta = a;
        g.record([ta, out, n, bwd]() mutable {
            if (!out.has_grad() || !ta.requires_grad()) return;
            const float * d = out.grad();
            const float * pa = ta.data();
            const float * po = out.data();
            float * ga = ta.grad();
            for (int64_t i = 0; i < n; ++i) ga[i] += d[i] * bwd(pa[i], po[i]);
        });
    }
    return out;
}

} // namespace

Tensor add(Graph & g, const Tensor & a, const Tensor & b) {
    Tensor out = ew_binary(g, a, b, "add",
                           [](float x, float y) { return x + y; },
                           [](float, float) { return 1.0f; },
                           [](float, float) { return 1.0f; });
    if (a.numel() == 1 && b.numel() == 1)
        out.set_shadow(a.item_precise() + b.item_precise());
    return out;
}

Tensor sub(Graph & g, const Tensor & a, const Tensor & b) {
    Tensor out = ew_binary(g, a, b, "sub",
                           [](float x, float y) { return x - y; },
                           [](float, float) { return 1.0f; },
                           [](float, float) { return -1.0f; });
    if (a.numel() == 1 && b.numel() == 1)
        out.set_shadow(a.item_precise() - b.item_precise());
    return out;
}

Tensor mul(Graph & g, const Tensor & a, const Tensor & b) {
    Tensor out = ew_binary(g, a, b, "mul",
                           [](float x, float y) { return x * y; },
                           [](float, float y) { return y; },
                           [](float x, float) { return x; });
    if (a.numel() == 1 && b.numel() == 1)
        out.set_shadow(a.item_precise() * b.item_precise());
    return out;
}

Tensor scale(Graph & g, const Tensor & a, float c) {
    Tensor out = ew_unary(g, a, "scale",
                          [c](float x) { return c * x; },
                          [c](float, float) { return c; });
    if (a.numel() == 1) out.set_shadow((double)c * a.item_precise());
    return out;
}

Tensor add_const(Graph & g, const Tensor & a, float c) {
    Tensor out = ew_unary(g, a, "add_const",
                          [c](float x) { return x + c; },
                          [](float, float) { return 1.0f; });
    if (a.numel() == 1) out.set_shadow((double)c + a.item_precise());
    return out;
}

Tensor tanh_op(Graph & g, const Tensor & a) {
    return ew_unary(g, a, "tanh",
                    [](float x) { return std::tanh(x); },
                    [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid_op(Graph & g, const Tensor & a) {
    return ew_unary(g, a, "sigmoid",
                    [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
                    [](float, float y) { return y * (1.0f - y); });
}

Tensor gelu_op(Graph & g, const Tensor & a) {
    constexpr float inv_sqrt2 = 0.7071067811865476f;
    constexpr float inv_sqrt2pi = 0.3989422804014327f;
    return ew_unary(g, a, "gelu",
                    [=](float x) { return 0.5f * x * (1.0f + std::erf(x * inv_sqrt2)); },
                    [=](float x, float) {
                        const float cdf = 0.5f * (1.0f + std::erf(x * inv_sqrt2));
                        return cdf + x * inv_sqrt2pi * std::exp(-0.5f * x * x);
                    });
}

Tensor elu_op(Graph & g, const Tensor & a) {
    return ew_unary(g, a, "elu",
                    [](float x) { return x > 0.0f ? x : std::expm1(x); },
                    [](float x, float y) { return x > 0.0f ? 1.0f : y + 1.0f; });
}

Tensor sqrt_op(Graph & g, const Tensor & a) {
    for (int64_t i = 0; i < a.numel(); ++i)
        DSTOK_CHECK(a.at(i) > 0.0f, "sqrt: inputs must be positive");
    return ew_unary(g, a, "sqrt",
                    [](float x) { return std::sqrt(x); },
                    [](float, float y) { return 0.5f / y; });
}

// ---------------------------------------------------------------------------

Tensor matmul(Graph & g, const Tensor & a, const Tensor & b, bool ta, bool tb) {
    DSTOK_CHECK(a.rank() <= 2 && b.rank() <= 2, "matmul: rank-1/2 operands only");
    const int m = ta ? a.cols() : a.rows();
    const int ka = ta ? a.rows() : a.cols();
    const int kb = tb ? b.cols() : b.rows();
    const int n = tb ? b.rows() : b.cols();
    DSTOK_CHECK(ka == kb, "matmul: inner dims %d vs %d (a %s%s, b %s%s)", ka, kb,
                shape_str(a.shape()).c_str(), ta ? "^T" : "", shape_str(b.shape()).c_str(),
                tb ? "^T" : "");
    Tensor out(Shape{m, n});
    kernels::matmul(a.data(), b.data(), out.data(), m, ka, n, ta, tb, false);
    if (track(g, {&a, &b})) {
        out.set_requires_grad(true);
        Tensor A = a, B = b;
        const int k = ka;
        g.record([A, B, out, m, k, n, ta, tb]() mutable {
            if (!out.has_grad()) return;
            const float * dc = out.grad();
            if (A.requires_grad()) {
                if (!ta) {
                    // dA = dC · B^T
                    kernels::matmul(dc, B.data(), A.grad(), m, n, k, false, !tb, true);
                } else {
                    // stored A is A^T: dA^T = B · dC^T
                    kernels::matmul(B.data(), dc, A.grad(), k, n, m, tb, true, true);
                }
            }
            if (B.requires_grad()) {
                if (!tb) {
                    // dB = A^T · dC
                    kernels::matmul(A.data(), dc, B.grad(), k, m, n, !ta, false, true);
                } else {
                    // stored B is B^T: dB^T = dC^T · A
                    kernels::matmul(dc, A.data(), B.grad(), n, m, k, true, ta, true);
                }
            }
        });
    }
    return out;
}

Tensor conv1d(Graph & g, const Tensor & x, const Tensor & w, const Tensor & bias,
              int stride, int pad) {
    DSTOK_CHECK(x.rank() == 2 && w.rank() == 3, "conv1d: x must be [T,Cin], w [Cout,K,Cin]");
    const int t = x.dim(0), cin = x.dim(1);
    const int cout = w.dim(0), kernel = w.dim(1);
    DSTOK_CHECK(w.dim(2) == cin, "conv1d: w in-channels %d vs input %d", w.dim(2), cin);
    DSTOK_CHECK(stride >= 1 && pad >= 0, "conv1d: bad stride/pad");
    if (bias.defined()) DSTOK_CHECK(bias.numel() == cout, "conv1d: bias size");
    const int t_out = kernels::conv1d_out_len(t, kernel, stride, pad);
    Tensor out(Shape{t_out, cout});
    kernels::conv1d(x.data(), w.data(), bias.defined() ? bias.data() : nullptr, out.data(),
                    t, cin, cout, kernel, stride, pad);
    const Tensor * maybe_bias = &bias;
    if (track(g, {&x, &w, maybe_bias})) {
        out.set_requires_grad(true);
        Tensor X = x, W = w, B = bias;
        g.record([X, W, B, out, t, cin, cout, kernel, stride, pad]() mutable {
            if (!out.has_grad()) return;
            const float * dy = out.grad();
            if (X.requires_grad())
                kernels::conv1d_grad_x(dy, W.data(), X.grad(), t, cin, cout, kernel, stride, pad);
            const bool need_w = W.requires_grad();
            const bool need_b = B.defined() && B.requires_grad();
            if (need_w || need_b) {
                // grad_w kernel fills both; route unneeded side to scratch
                Tensor scratch_w, scratch_b;
                float * dw = need_w ? W.grad() : (scratch_w = Tensor(W.shape())).data();
                float * db = need_b ? B.grad() : nullptr;
                if (!need_b && B.defined()) db = (scratch_b = Tensor(B.shape())).data();
                kernels::conv1d_grad_w(dy, X.data(), dw, db, t, cin, cout, kernel, stride, pad);
            }
        });
    }
    return out;
}

Tensor convtr1d(Graph & g, const Tensor & x, const Tensor & w, const Tensor & bias,
                int stride, int pad) {
    DSTOK_CHECK(x.rank() == 2 && w.rank() == 3, "convtr1d: x must be [T,Cin], w [Cin,K,Cout]");
    const int t = x.dim(0), cin = x.dim(1);
    DSTOK_CHECK(w.dim(0) == cin, "convtr1d: w in-channels %d vs input %d", w.dim(0), cin);
    const int kernel = w.dim(1), cout = w.dim(2);
    DSTOK_CHECK(stride >= 1 && pad >= 0, "convtr1d: bad stride/pad");
    if (bias.defined()) DSTOK_CHECK(bias.numel() == cout, "convtr1d: bias size");
    const int t_out = kernels::convtr1d_out_len(t, kernel, stride, pad);
    Tensor out(Shape{t_out, cout});
    kernels::convtr1d(x.data(), w.data(), bias.defined() ? bias.data() : nullptr, out.data(),
                      t, cin, cout, kernel, stride, pad);
    const Tensor * maybe_bias = &bias;
    if (track(g, {&x, &w, maybe_bias})) {
        out.set_requires_grad(true);
        Tensor X = x, W = w, B = bias;
        g.record([X, W, B, out, t, cin, cout, kernel, stride, pad]() mutable {
            if (!out.has_grad()) return;
            const float * dy = out.grad();
            if (X.requires_grad())
                kernels::convtr1d_grad_x(dy, W.data(), X.grad(), t, cin, cout, kernel, stride, pad);
            const bool need_w = W.requires_grad();
            const bool need_b = B.defined() && B.requires_grad();
            if (need_w || need_b) {
                Tensor scratch_w, scratch_b;
                float * dw = need_w ? W.grad() : (scratch_w = Tensor(W.shape())).data();
                float * db = need_b ? B.grad() : nullptr;
                if (!need_b && B.defined()) db = (scratch_b = Tensor(B.shape())).data();
                kernels::convtr1d_grad_w(dy, X.data(), dw, db, t, cin, cout, kernel, stride, pad);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------

Tensor layer_norm(Graph & g, const Tensor & x, const Tensor & gamma, const Tensor & beta,
                  float eps) {
    DSTOK_CHECK(x.rank() == 2, "layer_norm: x must be 2-D");
    const int t = x.dim(0), d = x.dim(1);
    if (gamma.defined()) DSTOK_CHECK(gamma.numel() == d, "layer_norm: gamma size");
    if (beta.defined()) DSTOK_CHECK(beta.numel() == d, "layer_norm: beta size");
    Tensor out(Shape{t, d});
    std::vector<float> xhat((size_t)t * d);
    std::vector<float> inv_std((size_t)t);
    const float * px = x.data();
    float * po = out.data();
    for (int r = 0; r < t; ++r) {
        const float * xr = px + (size_t)r * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xr[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= d;
        const float istd = (float)(1.0 / std::sqrt(var + eps));
        inv_std[(size_t)r] = istd;
        float * hr = xhat.data() + (size_t)r * d;
        float * orow = po + (size_t)r * d;
        for (int j = 0; j < d; ++j) {
            const float h = (float)((xr[j] - mean)) * istd;
            hr[j] = h;
            orow[j] = gamma.defined() ? h * gamma.at(j) + (beta.defined() ? beta.at(j) : 0.0f)
                                      : (beta.defined() ? h + beta.at(j) : h);
        }
    }
    const Tensor * mg = &gamma;
    const Tensor * mb = &beta;
    if (track(g, {&x, mg, mb})) {
        out.set_requires_grad(true);
        Tensor X = x, G = gamma, B = beta;
        g.record([X, G, B, out, t, d, xhat = std::move(xhat), inv_std = std::move(inv_std)]() mutable {
            if (!out.has_grad()) return;
            const float * dy = out.grad();
            for (int r = 0; r < t; ++r) {
                const float * dyr = dy + (size_t)r * d;
                const float * hr = xhat.data() + (size_t)r * d;
                if (X.requires_grad()) {
                    // dxhat = dy * gamma; dx = istd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const float dh = G.defined() ? dyr[j] * G.at(j) : dyr[j];
                        m1 += dh;
                        m2 += (double)dh * hr[j];
                    }
                    m1 /= d;
                    m2 /= d;
                    float * gx = X.grad() + (size_t)r * d;
                    const float istd = inv_std[(size_t)r];
                    for (int j = 0; j < d; ++j) {
                        const float dh = G.defined() ? dyr[j] * G.at(j) : dyr[j];
                        gx[j] += istd * (float)((double)dh - m1 - (double)hr[j] * m2);
                    }
                }
                if (G.defined() && G.requires_grad()) {
                    float * gg = G.grad();
                    for (int j = 0; j < d; ++j) gg[j] += dyr[j] * hr[j];
                }
                if (B.defined() && B.requires_grad()) {
                    float * gb = B.grad();
                    for (int j = 0; j < d; ++j) gb[j] += dyr[j];
                }
            }
        });
    }
    return out;
}

Tensor softmax_rows(Graph & g, const Tensor & x) {
    DSTOK_CHECK(x.rank() <= 2, "softmax_rows: 1-D/2-D only");
    const int rows = x.rows(), cols = x.cols();
    Tensor out(x.shape());
    kernels::softmax_rows(x.data(), out.data(), rows, cols);
    if (track(g, {&x})) {
        out.set_requires_grad(true);
        Tensor X = x;
        g.record([X, out, rows, cols]() mutable {
            if (!out.has_grad() || !X.requires_grad()) return;
            const float * y = out.data();
            const float * dy = out.grad();
            float * dx = X.grad();
            for (int r = 0; r < rows; ++r) {
                const float * yr = y + (size_t)r * cols;
                const float * dr = dy + (size_t)r * cols;
                double dot = 0.0;
                for (int j = 0; j < cols; ++j) dot += (double)dr[j] * yr[j];
                float * gr = dx + (size_t)r * cols;
                for (int j = 0; j < cols; ++j) gr[j] += yr[j] * (float)((double)dr[j] - dot);
            }
        });
    }
    return out;
}

Tensor log_softmax_rows(Graph & g, const Tensor & x) {
    DSTOK_CHECK(x.rank() <= 2, "log_softmax_rows: 1-D/2-D only");
    const int rows = x.rows(), cols = x.cols();
    Tensor out(x.shape());
    const float * px = x.data();
    float * po = out.data();
    for (int r = 0; r < rows; ++r) {
        const float * xr = px + (size_t)r * cols;
        float * orow = po + (size_t)r * cols;
        float mx = xr[0];
        for (int j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
        double denom = 0.0;
        for (int j = 0; j < cols; ++j) denom += std::exp((double)xr[j] - mx);
        const float lse = mx + (float)std::log(denom);
        for (int j = 0; j < cols; ++j) orow[j] = xr[j] - lse;
    }
    if (track(g, {&x})) {
        out.set_requires_grad(true);
        Tensor X = x;
        g.record([X, out, rows, cols]() mutable {
            if (!out.has_grad() || !X.requires_grad()) return;
            const float * y = out.data();
            const float * dy = out.grad();
            float * dx = X.grad();
            for (int r = 0; r < rows; ++r) {
                const float * yr = y + (size_t)r * cols;
                const float * dr = dy + (size_t)r * cols;
                double sum = 0.0;
                for (int j = 0; j < cols; ++j) sum += dr[j];
                float * gr = dx + (size_t)r * cols;
                for (int j = 0; j < cols; ++j) gr[j] += dr[j] - std::exp(yr[j]) * (float)sum;
            }
        });
    }
    return out;
}

Tensor masked_softmax_time(Graph & g, const Tensor & s, int valid_len) {
    DSTOK_CHECK(s.rank() == 2, "masked_softmax_time: s must be [T,D]");
    const int t = s.dim(0), d = s.dim(1);
    DSTOK_CHECK(valid_len >= 1 && valid_len <= t, "masked_softmax_time: valid_len %d out of [1,%d]",
                valid_len, t);
    Tensor out(Shape{t, d});
    const float * ps = s.data();
    float * po = out.data();
    for (int j = 0; j < d; ++j) {
        float mx = ps[j];
        for (int r = 1; r < valid_len; ++r) mx = std::max(mx, ps[(size_t)r * d + j]);
        double denom = 0.0;
        for (int r = 0; r < valid_len; ++r) denom += std::exp((double)ps[(size_t)r * d + j] - mx);
        for (int r = 0; r < valid_len; ++r)
            po[(size_t)r * d + j] = (float)(std::exp((double)ps[(size_t)r * d + j] - mx) / denom);
        for (int r = valid_len; r < t; ++r) po[(size_t)r * d + j] = 0.0f;
    }
    if (track(g, {&s})) {
        out.set_requires_grad(true);
        Tensor S = s;
        g.record([S, out, t, d, valid_len]() mutable {
            if (!out.has_grad() || !S.requires_grad()) return;
            const float * a = out.data();
            const float * da = out.grad();
            float * ds = S.grad();
            for (int j = 0; j < d; ++j) {
                double dot = 0.0;
                for (int r = 0; r < valid_len; ++r)
                    dot += (double)da[(size_t)r * d + j] * a[(size_t)r * d + j];
                for (int r = 0; r < valid_len; ++r)
                    ds[(size_t)r * d + j] +=
                        a[(size_t)r * d + j] * (float)((double)da[(size_t)r * d + j] - dot);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------

Tensor embedding(Graph & g, const Tensor & table, const std::vector<int> & ids) {
    DSTOK_CHECK(table.rank() == 2, "embedding: table must be [V,D]");
    DSTOK_CHECK(!ids.empty(), "embedding: empty id sequence");
    const int v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        DSTOK_CHECK(id >= 0 && id < v, "embedding: id %d out of [0,%d)", id, v);
    const int t = (int)ids.size();
    Tensor out(Shape{t, d});
    const float * pt = table.data();
    float * po = out.data();
    for (int r = 0; r < t; ++r)
        std::memcpy(po + (size_t)r * d, pt + (size_t)ids[(size_t)r] * d, sizeof(float) * d);
    if (track(g, {&table})) {
        out.set_requires_grad(true);
        Tensor T = table;
        g.record([T, out, ids, t, d]() mutable {
            if (!out.has_grad() || !T.requires_grad()) return;
            const float * dy = out.grad();
            float * gt = T.grad();
            for (int r = 0; r < t; ++r) {
                float * row = gt + (size_t)ids[(size_t)r] * d;
                const float * dr = dy + (size_t)r * d;
                for (int j = 0; j < d; ++j) row[j] += dr[j];
            }
        });
    }
    return out;
}

Tensor slice_rows(Graph & g, const Tensor & x, int r0, int r1) {
    DSTOK_CHECK(x.rank() == 2, "slice_rows: x must be 2-D");
    const int t = x.dim(0), d = x.dim(1);
    DSTOK_CHECK(0 <= r0 && r0 < r1 && r1 <= t, "slice_rows: range [%d,%d) out of %d rows", r0, r1, t);
    Tensor out(Shape{r1 - r0, d});
    std::memcpy(out.data(), x.data() + (size_t)r0 * d, sizeof(float) * (size_t)(r1 - r0) * d);
    if (track(g, {&x})) {
        out.set_requires_grad(true);
        Tensor X = x;
        g.record([X, out, r0, r1, d]() mutable {
            if (!out.has_grad() || !X.requires_grad()) return;
            const float * dy = out.grad();
            float * gx = X.grad() + (size_t)r0 * d;
            const int64_t n = (int64_t)(r1 - r0) * d;
            for (int64_t i = 0; i < n; ++i) gx[i] += dy[i];
        });
    }
    return out;
}

Tensor concat_cols(Graph & g, const Tensor & a, const Tensor & b) {
    const int ra = a.rows(), rb = b.rows();
    DSTOK_CHECK(ra == rb, "concat_cols: row mismatch %d vs %d", ra, rb);
    const int ca = a.cols(), cb = b.cols();
    const Shape shape = a.rank() == 1 && b.rank() == 1 ? Shape{ca + cb} : Shape{ra, ca + cb};
    Tensor out(shape);
    float * po = out.data();
    for (int r = 0; r < ra; ++r) {
        std::memcpy(po + (size_t)r * (ca + cb), a.data() + (size_t)r * ca, sizeof(float) * ca);
        std::memcpy(po + (size_t)r * (ca + cb) + ca, b.data() + (size_t)r * cb, sizeof(float) * cb);
    }
    if (track(g, {&a, &b})) {
        out.set_requires_grad(true);
        Tensor A = a, B = b;
        g.record([A, B, out, ra, ca, cb]() mutable {
            if (!out.has_grad()) return;
            const float * dy = out.grad();
            for (int r = 0; r < ra; ++r) {
                if (A.requires_grad()) {
                    float * ga = A.grad() + (size_t)r * ca;
                    for (int j = 0; j < ca; ++j) ga[j] += dy[(size_t)r * (ca + cb) + j];
                }
                if (B.requires_grad()) {
                    float * gb = B.grad() + (size_t)r * cb;
                    for (int j = 0; j < cb; ++j) gb[j] += dy[(size_t)r * (ca + cb) + ca + j];
                }
            }
        });
    }
    return out;
}

Tensor concat_rows(Graph & g, const std::vector<Tensor> & parts) {
    DSTOK_CHECK(!parts.empty(), "concat_rows: empty list");
    const int d = parts[0].cols();
    int total = 0;
    bool rg = false;
    for (const auto & p : parts) {
        DSTOK_CHECK(p.cols() == d, "concat_rows: column mismatch");
        total += p.rows();
        rg = rg || p.requires_grad();
    }
    Tensor out(Shape{total, d});
    float * po = out.data();
    int at = 0;
    for (const auto & p : parts) {
        std::memcpy(po + (size_t)at * d, p.data(), sizeof(float) * (size_t)p.rows() * d);
        at += p.rows();
    }
    if (g.recording() && rg) {
        out.set_requires_grad(true);
        std::vector<Tensor> ps = parts;
        g.record([ps, out, d]() mutable {
            if (!out.has_grad()) return;
            const float * dy = out.grad();
            int at = 0;
            for (auto & p : ps) {
                if (p.requires_grad()) {
                    float * gp = p.grad();
                    const int64_t n = (int64_t)p.rows() * d;
                    const float * src = dy + (size_t)at * d;
                    for (int64_t i = 0; i < n; ++i) gp[i] += src[i];
                }
                at += p.rows();
            }
        });
    }
    return out;
}

Tensor interp_linear_rows(Graph & g, const Tensor & x, int t_out) {
    DSTOK_CHECK(x.rank() == 2, "interp_linear_rows: x must be [T,D]");
    DSTOK_CHECK(t_out >= 1, "interp_linear_rows: t_out must be >= 1");
    const int t_in = x.dim(0), d = x.dim(1);
    // endpoint-aligned sampling positions
    std::vector<int> i0((size_t)t_out);
    std::vector<float> w1((size_t)t_out);
    for (int j = 0; j < t_out; ++j) {
        double u = 0.0;
        if (t_out > 1 && t_in > 1) u = (double)j * (t_in - 1) / (t_out - 1);
        int lo = (int)u;
        if (lo >= t_in - 1) lo = t_in - 1;
        const double frac = u - lo;
        i0[(size_t)j] = lo;
        w1[(size_t)j] = (float)frac;
    }
    Tensor out(Shape{t_out, d});
    const float * px = x.data();
    float * po = out.data();
    for (int j = 0; j < t_out; ++j) {
        const int lo = i0[(size_t)j];
        const int hi = lo + 1 < t_in ? lo + 1 : lo;
        const float wb = w1[(size_t)j];
        const float wa = 1.0f - wb;
        const float * ra = px + (size_t)lo * d;
        const float * rb = px + (size_t)hi * d;
        float * ro = po + (size_t)j * d;
        for (int c = 0; c < d; ++c) ro[c] = wa * ra[c] + wb * rb[c];
    }
    if (track(g, {&x})) {
        out.set_requires_grad(true);
        Tensor X = x;
        g.record([X, out, i0 = std::move(i0), w1 = std::move(w1), t_out, t_in, d]() mutable {
            if (!out.has_grad() || !X.requires_grad()) return;
            const float * dy = out.grad();
            float * gx = X.grad();
            for (int j = 0; j < t_out; ++j) {
                const int lo = i0[(size_t)j];
                const int hi = lo + 1 < t_in ? lo + 1 : lo;
                const float wb = w1[(size_t)j];
                const float wa = 1.0f - wb;
                const float * dr = dy + (size_t)j * d;
                float * ga = gx + (size_t)lo * d;
                float * gb = gx + (size_t)hi * d;
                for (int c = 0; c < d; ++c) {
                    ga[c] += wa * dr[c];
                    gb[c] += wb * dr[c];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------

Tensor reduce_sum_all(Graph & g, const Tensor & x) {
    double acc = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) acc += x.at(i);
    Tensor out = Tensor::scalar((float)acc);
    out.set_shadow(acc);
    if (track(g, {&x})) {
        out.set_requires_grad(true);
        Tensor X = x;
        g.record([X, out]() mutable {
            if (!out.has_grad() || !X.requires_grad()) return;
            const float d = out.grad()[0];
            float * gx = X.grad();
            for (int64_t i = 0; i < X.numel(); ++i) gx[i] += d;
        });
    }
    return out;
}

Tensor reduce_mean_all(Graph & g, const Tensor & x) {
    const float inv = 1.0f / (float)x.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) acc += x.at(i);
    Tensor out = Tensor::scalar((float)(acc / (double)x.numel()));
    out.set_shadow(acc / (double)x.numel());
    if (track(g, {&x})) {
        out.set_requires_grad(true);
        Tensor X = x;
        g.record([X, out, inv]() mutable {
            if (!out.has_grad() || !X.requires_grad()) return;
            const float d = out.grad()[0] * inv;
            float * gx = X.grad();
            for (int64_t i = 0; i < X.numel(); ++i) gx[i] += d;
        });
    }
    return out;
}

Tensor colsum(Graph & g, const Tensor & x) {
    DSTOK_CHECK(x.rank() == 2, "colsum: x must be 2-D");
    const int t = x.dim(0), d = x.dim(1);
    Tensor out(Shape{d});
    std::vector<double> acc((size_t)d, 0.0);
    const float * px = x.data();
    for (int r = 0; r < t; ++r)
        for (int j = 0; j < d; ++j) acc[(size_t)j] += px[(size_t)r * d + j];
    for (int j = 0; j < d; ++j) out.set(j, (float)acc[(size_t)j]);
    if (track(g, {&x})) {
        out.set_requires_grad(true);
        Tensor X = x;
        g.record([X, out, t, d]() mutable {
            if (!out.has_grad() || !X.requires_grad()) return;
            const float * dy = out.grad();
            float * gx = X.grad();
            for (int r = 0; r < t; ++r)
                for (int j = 0; j < d; ++j) gx[(size_t)r * d + j] += dy[j];
        });
    }
    return out;
}

Tensor cosine_sim(Graph & g, const Tensor & a, const Tensor & b) {
    DSTOK_CHECK(a.numel() == b.numel(), "cosine_sim: size mismatch");
    const int64_t n = a.numel();
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        dot += (double)a.at(i) * b.at(i);
        na2 += (double)a.at(i) * a.at(i);
        nb2 += (double)b.at(i) * b.at(i);
    }
    DSTOK_CHECK(na2 > 1e-24 && nb2 > 1e-24, "cosine_sim: zero vector");
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    const double cosv = dot / (na * nb);
    Tensor out = Tensor::scalar((float)cosv);
    out.set_shadow(cosv);
    if (track(g, {&a, &b})) {
        out.set_requires_grad(true);
        Tensor A = a, B = b;
        g.record([A, B, out, n, na, nb, cosv]() mutable {
            if (!out.has_grad()) return;
            const float d = out.grad()[0];
            if (A.requires_grad()) {
                float * ga = A.grad();
                for (int64_t i = 0; i < n; ++i)
                    ga[i] += d * (float)((double)B.at(i) / (na * nb) - cosv * A.at(i) / (na * na));
            }
            if (B.requires_grad()) {
                float * gb = B.grad();
                for (int64_t i = 0; i < n; ++i)
                    gb[i] += d * (float)((double)A.at(i) / (na * nb) - cosv * B.at(i) / (nb * nb));
            }
        });
    }
    return out;
}

Tensor mse_frames(Graph & g, const Tensor & pred, const Tensor & target, int r0, int r1) {
    DSTOK_CHECK(pred.rank() == 2 && target.rank() == 2, "mse_frames: 2-D inputs");
    DSTOK_CHECK(pred.dim(0) == target.dim(0) && pred.dim(1) == target.dim(1),
                "mse_frames: shape mismatch %s vs %s", shape_str(pred.shape()).c_str(),
                shape_str(target.shape()).c_str());
    const int t = pred.dim(0), d = pred.dim(1);
    DSTOK_CHECK(0 <= r0 && r0 < r1 && r1 <= t, "mse_frames: empty or invalid frame range [%d,%d)",
                r0, r1);
    const int64_t n = (int64_t)(r1 - r0) * d;
    double acc = 0.0;
    const float * pp = pred.data();
    const float * pt = target.data();
    for (int r = r0; r < r1; ++r)
        for (int j = 0; j < d; ++j) {
            const double e = (double)pp[(size_t)r * d + j] - pt[(size_t)r * d + j];
            acc += e * e;
        }
    Tensor out = Tensor::scalar((float)(acc / (double)n));
    out.set_shadow(acc / (double)n);
    if (track(g, {&pred})) {
        out.set_requires_grad(true);
        Tensor P = pred, T = target;
        g.record([P, T, out, r0, r1, d, n]() mutable {
            if (!out.has_grad() || !P.requires_grad()) return;
            const float dl = out.grad()[0] * 2.0f / (float)n;
            float * gp = P.grad();
            const float * pp = P.data();
            const float * pt = T.data();
            for (int r = r0; r < r1; ++r)
                for (int j = 0; j < d; ++j)
                    gp[(size_t)r * d + j] += dl * (pp[(size_t)r * d + j] - pt[(size_t)r * d + j]);
        });
    }
    return out;
}

Tensor nll_index(Graph & g, const Tensor & logp, int idx) {
    DSTOK_CHECK(logp.rows() == 1, "nll_index: expects a single row of log-probs");
    const int v = logp.cols();
    DSTOK_CHECK(idx >= 0 && idx < v, "nll_index: index %d out of [0,%d)", idx, v);
    Tensor out = Tensor::scalar(-logp.at(idx));
    out.set_shadow(-(double)logp.at(idx));
    if (track(g, {&logp})) {
        out.set_requires_grad(true);
        Tensor L = logp;
        g.record([L, out, idx]() mutable {
            if (!out.has_grad() || !L.requires_grad()) return;
            L.grad()[idx] -= out.grad()[0];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// fused multi-head attention with RoPE

namespace {

void rope_tables(int len, int pos0, int half, float base, std::vector<float> & cs,
                 std::vector<float> & sn) {
    cs.resize((size_t)len * half);
    sn.resize((size_t)len * half);
    for (int p = 0; p < len; ++p) {
        for (int i = 0; i < half; ++i) {
            const double theta = std::pow((double)base, -2.0 * i / (2.0 * half));
            const double ang = (double)(pos0 + p) * theta;
            cs[(size_t)p * half + i] = (float)std::cos(ang);
            sn[(size_t)p * half + i] = (float)std::sin(ang);
        }
    }
}

void rope_apply(float * x, int len, int dh, const std::vector<float> & cs,
                const std::vector<float> & sn) {
    const int half = dh / 2;
    for (int p = 0; p < len; ++p) {
        float * r = x + (size_t)p * dh;
        for (int i = 0; i < half; ++i) {
            const float c = cs[(size_t)p * half + i];
            const float s = sn[(size_t)p * half + i];
            const float a = r[2 * i], b = r[2 * i + 1];
            r[2 * i] = a * c - b * s;
            r[2 * i + 1] = a * s + b * c;
        }
    }
}

// transpose of the rotation (angles negated)
void rope_unapply(float * x, int len, int dh, const std::vector<float> & cs,
                  const std::vector<float> & sn) {
    const int half = dh / 2;
    for (int p = 0; p < len; ++p) {
        float * r = x + (size_t)p * dh;
        for (int i = 0; i < half; ++i) {
            const float c = cs[(size_t)p * half + i];
            const float s = sn[(size_t)p * half + i];
            const float a = r[2 * i], b = r[2 * i + 1];
            r[2 * i] = a * c + b * s;
            r[2 * i + 1] = -a * s + b * c;
        }
    }
}

void gather_head(const float * x, float * out, int len, int d, int h, int dh) {
    for (int p = 0; p < len; ++p)
        std::memcpy(out + (size_t)p * dh, x + (size_t)p * d + (size_t)h * dh, sizeof(float) * dh);
}

void scatter_head_add(float * x, const float * in, int len, int d, int h, int dh) {
    for (int p = 0; p < len; ++p) {
        float * dst = x + (size_t)p * d + (size_t)h * dh;
        const float * src = in + (size_t)p * dh;
        for (int i = 0; i < dh; ++i) dst[i] += src[i];
    }
}

} // namespace

Tensor attention(Graph & g, const Tensor & q, const Tensor & k, const Tensor & v,
                 const AttentionSpec & spec) {
    DSTOK_CHECK(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, "attention: 2-D inputs");
    const int t = q.dim(0), d = q.dim(1);
    const int s = k.dim(0);
    DSTOK_CHECK(k.dim(1) == d && v.dim(1) == d, "attention: dim mismatch");
    DSTOK_CHECK(v.dim(0) == s, "attention: k/v length mismatch");
    DSTOK_CHECK(spec.heads >= 1 && d % spec.heads == 0, "attention: dim %d not divisible by heads %d",
                d, spec.heads);
    const int heads = spec.heads;
    const int dh = d / heads;
    DSTOK_CHECK(!spec.rope || dh % 2 == 0, "attention: head dim must be even for rope");
    const float sc = 1.0f / std::sqrt((float)dh);

    std::vector<float> q_cs, q_sn, k_cs, k_sn;
    if (spec.rope) {
        rope_tables(t, spec.q_pos0, dh / 2, spec.rope_base, q_cs, q_sn);
        rope_tables(s, spec.k_pos0, dh / 2, spec.rope_base, k_cs, k_sn);
    }

    // saved per head: scaled roped queries, roped keys, softmax weights
    std::vector<float> qs((size_t)heads * t * dh);
    std::vector<float> ks((size_t)heads * s * dh);
    std::vector<float> att((size_t)heads * t * s);
    std::vector<float> vh_buf((size_t)s * dh);
    std::vector<float> scores((size_t)t * s);
    std::vector<float> oh((size_t)t * dh);

    Tensor out(Shape{t, d});
    for (int h = 0; h < heads; ++h) {
        float * qh = qs.data() + (size_t)h * t * dh;
        float * kh = ks.data() + (size_t)h * s * dh;
        float * ah = att.data() + (size_t)h * t * s;
        gather_head(q.data(), qh, t, d, h, dh);
        gather_head(k.data(), kh, s, d, h, dh);
        gather_head(v.data(), vh_buf.data(), s, d, h, dh);
        if (spec.rope) {
            rope_apply(qh, t, dh, q_cs, q_sn);
            rope_apply(kh, s, dh, k_cs, k_sn);
        }
        for (size_t i = 0; i < (size_t)t * dh; ++i) qh[i] *= sc;
        kernels::matmul(qh, kh, scores.data(), t, dh, s, false, true, false);
        kernels::softmax_rows(scores.data(), ah, t, s);
        kernels::matmul(ah, vh_buf.data(), oh.data(), t, s, dh, false, false, false);
        for (int p = 0; p < t; ++p)
            std::memcpy(out.data() + (size_t)p * d + (size_t)h * dh, oh.data() + (size_t)p * dh,
                        sizeof(float) * dh);
    }

    if (track(g, {&q, &k, &v})) {
        out.set_requires_grad(true);
        Tensor Q = q, K = k, V = v;
        g.record([Q, K, V, out, t, s, d, heads, dh, sc, spec,
                  qs = std::move(qs), ks = std::move(ks), att = std::move(att),
                  q_cs = std::move(q_cs), q_sn = std::move(q_sn),
                  k_cs = std::move(k_cs), k_sn = std::move(k_sn)]() mutable {
            if (!out.has_grad()) return;
            const float * dout = out.grad();
            std::vector<float> doh((size_t)t * dh);
            std::vector<float> vh((size_t)s * dh);
            std::vector<float> dvh((size_t)s * dh);
            std::vector<float> da((size_t)t * s);
            std::vector<float> ds((size_t)t * s);
            std::vector<float> dqh((size_t)t * dh);
            std::vector<float> dkh((size_t)s * dh);
            for (int h = 0; h < heads; ++h) {
                const float * qh = qs.data() + (size_t)h * t * dh;
                const float * kh = ks.data() + (size_t)h * s * dh;
                const float * ah = att.data() + (size_t)h * t * s;
                gather_head(dout, doh.data(), t, d, h, dh);
                gather_head(V.data(), vh.data(), s, d, h, dh);
                if (V.requires_grad()) {
                    kernels::matmul(ah, doh.data(), dvh.data(), s, t, dh, true, false, false);
                    scatter_head_add(V.grad(), dvh.data(), s, d, h, dh);
                }
                if (!Q.requires_grad() && !K.requires_grad()) continue;
                kernels::matmul(doh.data(), vh.data(), da.data(), t, dh, s, false, true, false);
                for (int r = 0; r < t; ++r) {
                    const float * ar = ah + (size_t)r * s;
                    const float * dar = da.data() + (size_t)r * s;
                    double dot = 0.0;
                    for (int j = 0; j < s; ++j) dot += (double)dar[j] * ar[j];
                    float * dsr = ds.data() + (size_t)r * s;
                    for (int j = 0; j < s; ++j) dsr[j] = ar[j] * (float)((double)dar[j] - dot);
                }
                if (Q.requires_grad()) {
                    kernels::matmul(ds.data(), kh, dqh.data(), t, s, dh, false, false, false);
                    for (size_t i = 0; i < (size_t)t * dh; ++i) dqh[i] *= sc;
                    if (spec.rope) rope_unapply(dqh.data(), t, dh, q_cs, q_sn);
                    scatter_head_add(Q.grad(), dqh.data(), t, d, h, dh);
                }
                if (K.requires_grad()) {
                    kernels::matmul(ds.data(), qh, dkh.data(), s, t, dh, true, false, false);
                    if (spec.rope) rope_unapply(dkh.data(), s, dh, k_cs, k_sn);
                    scatter_head_add(K.grad(), dkh.data(), s, d, h, dh);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// FSQ grid rounding with straight-through gradient

float grid_value(int level, int n_levels) {
    return (float)((2.0 * level - (n_levels - 1)) / (n_levels - 1));
}

int grid_level(float bounded, int n_levels) {
    const double u = (bounded + 1.0) * (n_levels - 1) / 2.0;
    int k = (int)std::ceil(u - 0.5); // exact midpoint snaps to the lower level
    if (k < 0) k = 0;
    if (k > n_levels - 1) k = n_levels - 1;
    return k;
}

Tensor round_grid_ste(Graph & g, const Tensor & y, int n_levels) {
    DSTOK_CHECK(n_levels >= 2, "round_grid_ste: need at least 2 levels");
    Tensor out(y.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i)
        out.set(i, grid_value(grid_level(y.at(i), n_levels), n_levels));
    if (track(g, {&y})) {
        out.set_requires_grad(true);
        Tensor Y = y;
        g.record([Y, out, n]() mutable {
            if (!out.has_grad() || !Y.requires_grad()) return;
            const float * d = out.grad();
            float * gy = Y.grad();
            for (int64_t i = 0; i < n; ++i) gy[i] += d[i];
        });
    }
    return out;
}

} // namespace dstok
