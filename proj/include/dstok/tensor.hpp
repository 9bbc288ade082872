#pragma once

// Minimal dense f32 tensor with reverse-mode autodiff. Graphs are built by
// the ops in ops.hpp, which record backward closures onto a Graph; backward
// walks the record in reverse creation order (a topological order for
// define-by-run graphs), so every node is visited exactly once.

#include "dstok/common.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace dstok {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape & s);
std::string shape_str(const Shape & s);

struct TensorData {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad; // empty until first accumulation
    bool requires_grad = false;
    // double-precision shadow of scalar reductions, kept alongside the f32
    // value so finite-difference oracles are not limited by the final cast
    double shadow = std::numeric_limits<double>::quiet_NaN();
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float v);
    static Tensor scalar(float v);
    static Tensor from(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor randn(Shape shape, Rng & rng, float scale = 1.0f, bool requires_grad = false);
    static Tensor rand_uniform(Shape shape, Rng & rng, float lo, float hi, bool requires_grad = false);

    bool defined() const { return d_ != nullptr; }
    const Shape & shape() const { return d_->shape; }
    int rank() const { return (int)d_->shape.size(); }
    int dim(int i) const { return d_->shape[(size_t)i]; }
    int64_t numel() const { return (int64_t)d_->value.size(); }
    // matrix view helpers ([rows, cols]; rank-1 counts as a single row)
    int rows() const;
    int cols() const;

    float * data() { return d_->value.data(); }
    const float * data() const { return d_->value.data(); }
    std::vector<float> & value() { return d_->value; }
    const std::vector<float> & value() const { return d_->value; }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool rg) { d_->requires_grad = rg; }

    bool has_grad() const { return !d_->grad.empty(); }
    // zero-allocates on first touch
    float * grad();
    const std::vector<float> & grad_vec();
    void zero_grad();

    float item() const;
    double item_precise() const;
    void set_shadow(double v) { d_->shadow = v; }
    double shadow_or(double fallback) const { return std::isnan(d_->shadow) ? fallback : d_->shadow; }
    float at(int64_t i) const { return d_->value[(size_t)i]; }
    void  set(int64_t i, float v) { d_->value[(size_t)i] = v; }

    bool all_finite() const;
    void check_finite(const char * what) const;

    Tensor clone() const;
    void copy_from(const Tensor & src);

    bool same_storage(const Tensor & o) const { return d_ == o.d_; }
    TensorData * raw() const { return d_.get(); }

  private:
    std::shared_ptr<TensorData> d_;
};

// Topologically ordered record of primitive ops for one forward pass.
class Graph {
  public:
    explicit Graph(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }

    void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }
    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // seeds d(loss)/d(loss)=1 and sweeps the record in reverse; leaves that do
    // not participate are simply never written (their grad reads as zero)
    void backward(const Tensor & loss);

  private:
    bool recording_ = true;
    std::vector<std::function<void()>> nodes_;
};

// accumulate src into dst grad buffer
void accumulate_grad(Tensor & t, const float * src, int64_t n);

} // namespace dstok
