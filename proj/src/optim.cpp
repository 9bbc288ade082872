#include "dstok/optim.hpp"

#include <cmath>

namespace dstok {

AdamW::AdamW(const AdamWConfig & cfg, const ParamMap & params) : cfg_(cfg), params_(params) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto & it : params_.items) {
        m_.emplace_back(it.second.shape());
        v_.emplace_back(it.second.shape());
    }
}

void AdamW::step() {
    step_ += 1;
    float lr = cfg_.lr;
    if (cfg_.warmup_steps > 0 && step_ < cfg_.warmup_steps)
        lr = cfg_.lr * (float)step_ / (float)cfg_.warmup_steps;
    const double bc1 = 1.0 - std::pow((double)cfg_.beta1, (double)step_);
    const double bc2 = 1.0 - std::pow((double)cfg_.beta2, (double)step_);
    const float decay_mult = 1.0f - lr * cfg_.weight_decay;
    for (size_t pi = 0; pi < params_.items.size(); ++pi) {
        Tensor & p = params_.items[pi].second;
        const int64_t n = p.numel();
        DSTOK_CHECK(m_[pi].numel() == n, "adamw: moment/param shape mismatch for %s",
                    params_.items[pi].first.c_str());
        const bool has_g = p.has_grad();
        const float * g = has_g ? p.grad() : nullptr;
        float * m = m_[pi].data();
        float * v = v_[pi].data();
        float * th = p.data();
        for (int64_t i = 0; i < n; ++i) {
            const float gi = has_g ? g[i] : 0.0f;
            DSTOK_CHECK(std::isfinite(gi), "adamw: non-finite gradient in %s",
                        params_.items[pi].first.c_str());
            m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * gi * gi;
            const float mhat = (float)((double)m[i] / bc1);
            const float vhat = (float)((double)v[i] / bc2);
            // decoupled decay first, then the adaptive update
            th[i] *= decay_mult;
            th[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

double finite_difference_check(const std::function<Tensor(Graph &)> & f,
                               std::vector<Tensor> params, float eps) {
    DSTOK_CHECK(eps > 0.0f, "finite_difference_check: eps must be positive");
    for (auto & p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    Graph g;
    Tensor loss = f(g);
    g.backward(loss);
    std::vector<std::vector<float>> ad;
    ad.reserve(params.size());
    for (auto & p : params) ad.push_back(p.grad_vec());

    // per-parameter relative error ||g_ad - g_fd|| / (||g_fd|| + 1e-8), using
    // the actually representable perturbation as the divisor
    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor & p = params[pi];
        double diff2 = 0.0, fd2 = 0.0;
        for (int64_t i = 0; i < p.numel(); ++i) {
            const float orig = p.at(i);
            const float up = orig + eps;
            const float dn = orig - eps;
            Graph eval(false);
            p.set(i, up);
            const double lp = f(eval).item_precise();
            p.set(i, dn);
            const double lm = f(eval).item_precise();
            p.set(i, orig);
            DSTOK_CHECK(std::isfinite(lp) && std::isfinite(lm),
                        "finite_difference_check: non-finite loss at perturbed point");
            const double g_fd = (lp - lm) / ((double)up - (double)dn);
            const double g_ad = ad[pi][(size_t)i];
            diff2 += (g_ad - g_fd) * (g_ad - g_fd);
            fd2 += g_fd * g_fd;
        }
        const double rel = std::sqrt(diff2) / (std::sqrt(fd2) + 1e-8);
        if (rel > max_rel) max_rel = rel;
    }
    return max_rel;
}

} // namespace dstok
