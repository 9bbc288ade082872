#include "dstok/nn.hpp"

#include <cmath>

namespace dstok {

static float init_bound(int fan_in) { return 1.0f / std::sqrt((float)fan_in); }

Linear::Linear(int in, int out, Rng & rng, bool zero_init) {
    if (zero_init) {
        w = Tensor::zeros({out, in});
        b = Tensor::zeros({out});
    } else {
        const float bound = init_bound(in);
        w = Tensor::rand_uniform({out, in}, rng, -bound, bound);
        b = Tensor::rand_uniform({out}, rng, -bound, bound);
    }
}

Tensor Linear::forward(Graph & g, const Tensor & x) const {
    return add(g, matmul(g, x, w, false, true), b);
}

void Linear::params(const std::string & prefix, ParamMap & pm) const {
    pm.add(prefix + ".w", w);
    pm.add(prefix + ".b", b);
}

Conv1dLayer::Conv1dLayer(int in, int out, int kernel, int stride_, int pad_, Rng & rng, bool zero_init)
    : stride(stride_), pad(pad_) {
    if (zero_init) {
        w = Tensor::zeros({out, kernel, in});
        b = Tensor::zeros({out});
    } else {
        const float bound = init_bound(in * kernel);
        w = Tensor::rand_uniform({out, kernel, in}, rng, -bound, bound);
        b = Tensor::rand_uniform({out}, rng, -bound, bound);
    }
}

Tensor Conv1dLayer::forward(Graph & g, const Tensor & x) const {
    return conv1d(g, x, w, b, stride, pad);
}

void Conv1dLayer::params(const std::string & prefix, ParamMap & pm) const {
    pm.add(prefix + ".w", w);
    pm.add(prefix + ".b", b);
}

ConvTr1dLayer::ConvTr1dLayer(int in, int out, int kernel, int stride_, int pad_, Rng & rng)
    : stride(stride_), pad(pad_) {
    const float bound = init_bound(in * kernel);
    w = Tensor::rand_uniform({in, kernel, out}, rng, -bound, bound);
    b = Tensor::rand_uniform({out}, rng, -bound, bound);
}

Tensor ConvTr1dLayer::forward(Graph & g, const Tensor & x) const {
    return convtr1d(g, x, w, b, stride, pad);
}

void ConvTr1dLayer::params(const std::string & prefix, ParamMap & pm) const {
    pm.add(prefix + ".w", w);
    pm.add(prefix + ".b", b);
}

LayerNormLayer::LayerNormLayer(int dim) {
    gamma = Tensor::full({dim}, 1.0f);
    beta = Tensor::zeros({dim});
}

Tensor LayerNormLayer::forward(Graph & g, const Tensor & x) const {
    return layer_norm(g, x, gamma, beta);
}

void LayerNormLayer::params(const std::string & prefix, ParamMap & pm) const {
    pm.add(prefix + ".gamma", gamma);
    pm.add(prefix + ".beta", beta);
}

EncoderBlock::EncoderBlock(int dim, int heads_, int ffn_inner, Rng & rng)
    : ln1(dim), ln2(dim), wq(dim, dim, rng), wk(dim, dim, rng), wv(dim, dim, rng),
      wo(dim, dim, rng), ff1(dim, ffn_inner, rng), ff2(ffn_inner, dim, rng), heads(heads_) {}

Tensor EncoderBlock::forward(Graph & g, const Tensor & x) const {
    Tensor h = ln1.forward(g, x);
    AttentionSpec spec;
    spec.heads = heads;
    Tensor att = attention(g, wq.forward(g, h), wk.forward(g, h), wv.forward(g, h), spec);
    Tensor y = add(g, x, wo.forward(g, att));
    Tensor f = ff2.forward(g, gelu_op(g, ff1.forward(g, ln2.forward(g, y))));
    return add(g, y, f);
}

void EncoderBlock::params(const std::string & prefix, ParamMap & pm) const {
    ln1.params(prefix + ".ln1", pm);
    ln2.params(prefix + ".ln2", pm);
    wq.params(prefix + ".wq", pm);
    wk.params(prefix + ".wk", pm);
    wv.params(prefix + ".wv", pm);
    wo.params(prefix + ".wo", pm);
    ff1.params(prefix + ".ff1", pm);
    ff2.params(prefix + ".ff2", pm);
}

GruCell::GruCell(int input, int hidden_, Rng & rng)
    : wz(input + hidden_, hidden_, rng), wr(input + hidden_, hidden_, rng),
      wh(input + hidden_, hidden_, rng), hidden(hidden_) {}

Tensor GruCell::scan(Graph & g, const Tensor & x, bool reverse) const {
    DSTOK_CHECK(x.rank() == 2, "gru: input must be [T,D]");
    const int t = x.dim(0);
    Tensor h = Tensor::zeros({1, hidden});
    std::vector<Tensor> outs((size_t)t);
    for (int step = 0; step < t; ++step) {
        const int r = reverse ? t - 1 - step : step;
        Tensor xr = slice_rows(g, x, r, r + 1);
        Tensor xh = concat_cols(g, xr, h);
        Tensor zg = sigmoid_op(g, wz.forward(g, xh));
        Tensor rg = sigmoid_op(g, wr.forward(g, xh));
        Tensor xrh = concat_cols(g, xr, mul(g, rg, h));
        Tensor cand = tanh_op(g, wh.forward(g, xrh));
        // h = (1-z)*h + z*cand
        Tensor keep = add_const(g, scale(g, zg, -1.0f), 1.0f);
        h = add(g, mul(g, keep, h), mul(g, zg, cand));
        outs[(size_t)r] = h;
    }
    return concat_rows(g, outs);
}

void GruCell::params(const std::string & prefix, ParamMap & pm) const {
    wz.params(prefix + ".wz", pm);
    wr.params(prefix + ".wr", pm);
    wh.params(prefix + ".wh", pm);
}

Tensor sinusoidal_embedding(float t, int dim, float max_period) {
    DSTOK_CHECK(dim % 2 == 0, "sinusoidal_embedding: dim must be even");
    const int half = dim / 2;
    Tensor out(Shape{1, dim});
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log((double)max_period) * i / half);
        const double arg = (double)t * 1000.0 * freq;
        out.set(i, (float)std::cos(arg));
        out.set(half + i, (float)std::sin(arg));
    }
    return out;
}

} // namespace dstok
