#pragma once

#include "dstok/tensor.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace dstok {

// Ordered name->tensor registry; the order fixes optimizer slot assignment
// and checkpoint layout.
struct ParamMap {
    std::vector<std::pair<std::string, Tensor>> items;

    void add(const std::string & name, const Tensor & t) {
        for (const auto & it : items)
            DSTOK_CHECK(it.first != name, "duplicate parameter name %s", name.c_str());
        items.emplace_back(name, t);
    }
    void add_all(const std::string & prefix, const ParamMap & other) {
        for (const auto & it : other.items) add(prefix + it.first, it.second);
    }
    Tensor * find(const std::string & name) {
        for (auto & it : items)
            if (it.first == name) return &it.second;
        return nullptr;
    }
    size_t size() const { return items.size(); }
    void zero_grads() {
        for (auto & it : items) it.second.zero_grad();
    }
    void set_requires_grad(bool rg) {
        for (auto & it : items) it.second.set_requires_grad(rg);
    }
    int64_t numel() const {
        int64_t n = 0;
        for (const auto & it : items) n += it.second.numel();
        return n;
    }
};

struct AdamWConfig {
    float lr = 3e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.01f;
    int warmup_steps = 500;
};

// AdamW with decoupled multiplicative weight decay applied before the
// adaptive update; bias-corrected moments.
class AdamW {
  public:
    AdamW(const AdamWConfig & cfg, const ParamMap & params);

    void step();
    int64_t step_count() const { return step_; }

    // checkpoint access
    std::vector<Tensor> & moments1() { return m_; }
    std::vector<Tensor> & moments2() { return v_; }
    void set_step_count(int64_t s) { step_ = s; }
    const ParamMap & params() const { return params_; }

  private:
    AdamWConfig cfg_;
    ParamMap params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    int64_t step_ = 0;
};

// Central finite differences against the recorded-graph gradients.
// f must rebuild the same deterministic graph on every call; returns
// max over parameter elements of |g_ad - g_fd| / (|g_fd| + 1e-8).
double finite_difference_check(const std::function<Tensor(Graph &)> & f,
                               std::vector<Tensor> params, float eps = 1e-3f);

// Named gradient-check suites registered by the modules; `gradcheck` in the
// CLI and the acceptance suite run all of them.
struct GradCheckCase {
    std::string name;
    std::function<double()> run; // returns max relative error
};
std::vector<GradCheckCase> builtin_gradcheck_cases();

} // namespace dstok
