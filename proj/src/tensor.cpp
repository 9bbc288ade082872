#include "dstok/tensor.hpp"

#include <cmath>

namespace dstok {

int64_t shape_numel(const Shape & s) {
    int64_t n = 1;
    for (int d : s) {
        DSTOK_CHECK(d > 0, "shape extent must be positive, got %d", d);
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape & s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, bool requires_grad) {
    d_ = std::make_shared<TensorData>();
    const int64_t n = shape_numel(shape);
    d_->shape = std::move(shape);
    d_->value.assign((size_t)n, 0.0f);
    d_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return Tensor(std::move(shape), requires_grad); }

Tensor Tensor::full(Shape shape, float v) {
    Tensor t(std::move(shape));
    for (auto & x : t.value()) x = v;
    return t;
}

Tensor Tensor::scalar(float v) {
    Tensor t(Shape{1});
    t.set(0, v);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> data, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    DSTOK_CHECK((int64_t)data.size() == n, "from: data size %zu does not match shape %s",
                data.size(), shape_str(shape).c_str());
    Tensor t;
    t.d_ = std::make_shared<TensorData>();
    t.d_->shape = std::move(shape);
    t.d_->value = std::move(data);
    t.d_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::randn(Shape shape, Rng & rng, float scale, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    for (auto & x : t.value()) x = scale * rng.normal_f();
    return t;
}

Tensor Tensor::rand_uniform(Shape shape, Rng & rng, float lo, float hi, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    for (auto & x : t.value()) x = (float)rng.uniform(lo, hi);
    return t;
}

int Tensor::rows() const {
    return rank() == 1 ? 1 : dim(0);
}

int Tensor::cols() const {
    if (rank() == 1) return dim(0);
    int64_t c = 1;
    for (int i = 1; i < rank(); ++i) c *= dim(i);
    return (int)c;
}

float * Tensor::grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), 0.0f);
    return d_->grad.data();
}

const std::vector<float> & Tensor::grad_vec() {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), 0.0f);
    return d_->grad;
}

void Tensor::zero_grad() {
    d_->grad.clear();
}

float Tensor::item() const {
    DSTOK_CHECK(numel() == 1, "item: tensor %s is not scalar", shape_str(shape()).c_str());
    return d_->value[0];
}

double Tensor::item_precise() const {
    DSTOK_CHECK(numel() == 1, "item_precise: tensor %s is not scalar", shape_str(shape()).c_str());
    return shadow_or((double)d_->value[0]);
}

bool Tensor::all_finite() const {
    for (float v : d_->value) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::check_finite(const char * what) const {
    DSTOK_CHECK(all_finite(), "non-finite values in %s", what);
}

Tensor Tensor::clone() const {
    Tensor t;
    t.d_ = std::make_shared<TensorData>(*d_);
    return t;
}

void Tensor::copy_from(const Tensor & src) {
    DSTOK_CHECK(numel() == src.numel(), "copy_from: size mismatch");
    d_->value = src.d_->value;
}

void Graph::backward(const Tensor & loss) {
    DSTOK_CHECK(loss.numel() == 1, "backward: loss must be scalar, got %s",
                shape_str(loss.shape()).c_str());
    DSTOK_CHECK(std::isfinite(loss.item()), "backward: loss is not finite");
    Tensor l = loss;
    l.grad()[0] += 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void accumulate_grad(Tensor & t, const float * src, int64_t n) {
    DSTOK_CHECK(t.numel() == n, "accumulate_grad: size mismatch");
    float * g = t.grad();
    for (int64_t i = 0; i < n; ++i) g[i] += src[i];
}

} // namespace dstok
