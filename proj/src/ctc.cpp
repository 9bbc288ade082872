#include "dstok/ctc.hpp"

#include <cmath>
#include <limits>

namespace dstok {

namespace {

constexpr double k_neg_inf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
    if (a == k_neg_inf) return b;
    if (b == k_neg_inf) return a;
    const double m = a > b ? a : b;
    return m + std::log1p(std::exp(-(std::fabs(a - b))));
}

} // namespace

int ctc_min_frames(const std::vector<int> & target) {
    int repeats = 0;
    for (size_t i = 1; i < target.size(); ++i)
        if (target[i] == target[i - 1]) ++repeats;
    return (int)target.size() + repeats;
}

Tensor ctc_loss(Graph & g, const Tensor & log_probs, const std::vector<int> & target, int blank) {
    DSTOK_CHECK(log_probs.rank() == 2, "ctc_loss: log_probs must be [T,V]");
    const int t_len = log_probs.dim(0);
    const int vocab = log_probs.dim(1);
    DSTOK_CHECK(blank >= 0 && blank < vocab, "ctc_loss: blank id %d out of range", blank);
    DSTOK_CHECK(!target.empty(), "ctc_loss: empty target is not allowed");
    for (int s : target)
        DSTOK_CHECK(s >= 0 && s < vocab && s != blank, "ctc_loss: target symbol %d invalid", s);
    DSTOK_CHECK(t_len >= ctc_min_frames(target),
                "ctc_loss: infeasible, %d frames for a target needing %d", t_len,
                ctc_min_frames(target));
    // rows must be normalized log-probabilities
    for (int r = 0; r < t_len; ++r) {
        double acc = 0.0;
        for (int v = 0; v < vocab; ++v) acc += std::exp((double)log_probs.at((int64_t)r * vocab + v));
        DSTOK_CHECK(std::fabs(acc - 1.0) < 1e-3, "ctc_loss: row %d is not log-softmax normalized", r);
    }

    const int s_len = 2 * (int)target.size() + 1;
    std::vector<int> ext((size_t)s_len, blank);
    for (size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];

    auto y = [&](int t, int k) { return (double)log_probs.at((int64_t)t * vocab + k); };

    std::vector<double> alpha((size_t)t_len * s_len, k_neg_inf);
    alpha[0] = y(0, ext[0]);
    if (s_len > 1) alpha[1] = y(0, ext[1]);
    for (int t = 1; t < t_len; ++t) {
        for (int s = 0; s < s_len; ++s) {
            double a = alpha[(size_t)(t - 1) * s_len + s];
            if (s >= 1) a = log_add(a, alpha[(size_t)(t - 1) * s_len + s - 1]);
            if (s >= 2 && ext[(size_t)s] != blank && ext[(size_t)s] != ext[(size_t)s - 2])
                a = log_add(a, alpha[(size_t)(t - 1) * s_len + s - 2]);
            alpha[(size_t)t * s_len + s] = a == k_neg_inf ? k_neg_inf : a + y(t, ext[(size_t)s]);
        }
    }
    double log_p = alpha[(size_t)(t_len - 1) * s_len + s_len - 1];
    if (s_len > 1) log_p = log_add(log_p, alpha[(size_t)(t_len - 1) * s_len + s_len - 2]);
    DSTOK_CHECK(log_p > k_neg_inf, "ctc_loss: zero-probability target");

    Tensor out = Tensor::scalar((float)(-log_p));
    out.set_shadow(-log_p);

    if (g.recording() && log_probs.requires_grad()) {
        out.set_requires_grad(true);
        // beta excludes the emission at t, so alpha+beta counts y[t,k] once
        std::vector<double> beta((size_t)t_len * s_len, k_neg_inf);
        beta[(size_t)(t_len - 1) * s_len + s_len - 1] = 0.0;
        if (s_len > 1) beta[(size_t)(t_len - 1) * s_len + s_len - 2] = 0.0;
        for (int t = t_len - 2; t >= 0; --t) {
            for (int s = 0; s < s_len; ++s) {
                double b = beta[(size_t)(t + 1) * s_len + s] + y(t + 1, ext[(size_t)s]);
                if (s + 1 < s_len)
                    b = log_add(b, beta[(size_t)(t + 1) * s_len + s + 1] + y(t + 1, ext[(size_t)s + 1]));
                if (s + 2 < s_len && ext[(size_t)s + 2] != blank && ext[(size_t)s + 2] != ext[(size_t)s])
                    b = log_add(b, beta[(size_t)(t + 1) * s_len + s + 2] + y(t + 1, ext[(size_t)s + 2]));
                beta[(size_t)t * s_len + s] = b;
            }
        }
        // d(-logP)/dy[t,k] = -sum_{s: ext[s]=k} exp(alpha_t(s)+beta_t(s)-logP)
        std::vector<float> grad((size_t)t_len * vocab, 0.0f);
        for (int t = 0; t < t_len; ++t) {
            std::vector<double> by_label((size_t)vocab, k_neg_inf);
            for (int s = 0; s < s_len; ++s) {
                const double post = alpha[(size_t)t * s_len + s] + beta[(size_t)t * s_len + s];
                by_label[(size_t)ext[(size_t)s]] = log_add(by_label[(size_t)ext[(size_t)s]], post);
            }
            for (int k = 0; k < vocab; ++k)
                if (by_label[(size_t)k] > k_neg_inf)
                    grad[(size_t)t * vocab + k] = (float)(-std::exp(by_label[(size_t)k] - log_p));
        }
        Tensor L = log_probs;
        g.record([L, out, grad = std::move(grad)]() mutable {
            if (!out.has_grad() || !L.requires_grad()) return;
            const float d = out.grad()[0];
            float * gl = L.grad();
            for (size_t i = 0; i < grad.size(); ++i) gl[i] += d * grad[i];
        });
    }
    return out;
}

std::vector<int> ctc_greedy_decode(const std::vector<float> & log_probs, int t, int vocab, int blank) {
    std::vector<int> out;
    int prev = -1;
    for (int r = 0; r < t; ++r) {
        const float * row = log_probs.data() + (size_t)r * vocab;
        int best = 0;
        for (int v = 1; v < vocab; ++v)
            if (row[v] > row[best]) best = v;
        if (best != blank && best != prev) out.push_back(best);
        prev = best;
    }
    return out;
}

std::vector<int> ctc_greedy_decode(const Tensor & log_probs, int blank) {
    DSTOK_CHECK(log_probs.rank() == 2, "ctc_greedy_decode: log_probs must be [T,V]");
    return ctc_greedy_decode(log_probs.value(), log_probs.dim(0), log_probs.dim(1), blank);
}

} // namespace dstok
