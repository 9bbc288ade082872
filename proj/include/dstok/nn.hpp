#pragma once

// Layer builders shared by every network in the project. Layers own their
// parameter tensors; construction order under a seeded Rng fixes the
// initialization, and params() registers tensors in a stable order for the
// optimizer and checkpoints.

#include "dstok/ops.hpp"
#include "dstok/optim.hpp"

namespace dstok {

struct Linear {
    Tensor w; // [out,in]
    Tensor b; // [out]

    Linear() = default;
    Linear(int in, int out, Rng & rng, bool zero_init = false);
    Tensor forward(Graph & g, const Tensor & x) const; // x[T,in] -> [T,out]
    void params(const std::string & prefix, ParamMap & pm) const;
};

struct Conv1dLayer {
    Tensor w; // [out,k,in]
    Tensor b; // [out]
    int stride = 1;
    int pad = 0;

    Conv1dLayer() = default;
    Conv1dLayer(int in, int out, int kernel, int stride, int pad, Rng & rng, bool zero_init = false);
    Tensor forward(Graph & g, const Tensor & x) const;
    void params(const std::string & prefix, ParamMap & pm) const;
};

struct ConvTr1dLayer {
    Tensor w; // [in,k,out]
    Tensor b; // [out]
    int stride = 1;
    int pad = 0;

    ConvTr1dLayer() = default;
    ConvTr1dLayer(int in, int out, int kernel, int stride, int pad, Rng & rng);
    Tensor forward(Graph & g, const Tensor & x) const;
    void params(const std::string & prefix, ParamMap & pm) const;
};

struct LayerNormLayer {
    Tensor gamma;
    Tensor beta;

    LayerNormLayer() = default;
    explicit LayerNormLayer(int dim);
    Tensor forward(Graph & g, const Tensor & x) const;
    void params(const std::string & prefix, ParamMap & pm) const;
};

// pre-norm transformer encoder block with RoPE self-attention
struct EncoderBlock {
    LayerNormLayer ln1, ln2;
    Linear wq, wk, wv, wo;
    Linear ff1, ff2;
    int heads = 4;

    EncoderBlock() = default;
    EncoderBlock(int dim, int heads, int ffn_inner, Rng & rng);
    Tensor forward(Graph & g, const Tensor & x) const;
    void params(const std::string & prefix, ParamMap & pm) const;
};

// minimal gated recurrent cell; bidirectional pass helper for the probes
struct GruCell {
    Linear wz, wr, wh; // each maps [x;h] -> hidden
    int hidden = 0;

    GruCell() = default;
    GruCell(int input, int hidden, Rng & rng);
    // x[T,input] -> h[T,hidden]; reverse=true scans right-to-left
    Tensor scan(Graph & g, const Tensor & x, bool reverse) const;
    void params(const std::string & prefix, ParamMap & pm) const;
};

// sinusoidal embedding of a scalar position/timestep (not differentiable w.r.t. t)
Tensor sinusoidal_embedding(float t, int dim, float max_period = 10000.0f);

} // namespace dstok
