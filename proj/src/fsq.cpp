#include "dstok/fsq.hpp"

#include <cmath>

namespace dstok {

int64_t fsq_flat_from_levels(const std::vector<int> & levels, int n_levels) {
    int64_t flat = 0;
    int64_t radix = 1;
    for (size_t c = 0; c < levels.size(); ++c) {
        DSTOK_CHECK(levels[c] >= 0 && levels[c] < n_levels, "fsq: level %d out of [0,%d)",
                    levels[c], n_levels);
        flat += (int64_t)levels[c] * radix;
        radix *= n_levels;
    }
    return flat;
}

std::vector<int> fsq_levels_from_flat(int64_t flat, const FsqConfig & cfg) {
    cfg.validate();
    DSTOK_CHECK(flat >= 0 && flat < cfg.codebook_size(), "fsq: flat index %lld out of range",
                (long long)flat);
    std::vector<int> levels((size_t)cfg.channels);
    for (int c = 0; c < cfg.channels; ++c) {
        levels[(size_t)c] = (int)(flat % cfg.levels);
        flat /= cfg.levels;
    }
    return levels;
}

FsqCode fsq_quantize(const std::vector<float> & pre, const FsqConfig & cfg,
                     std::vector<float> * quantized) {
    cfg.validate();
    DSTOK_CHECK((int)pre.size() == cfg.channels, "fsq: expected %d channels, got %zu",
                cfg.channels, pre.size());
    FsqCode code;
    std::vector<int> levels((size_t)cfg.channels);
    if (quantized) quantized->assign((size_t)cfg.channels, 0.0f);
    for (int c = 0; c < cfg.channels; ++c) {
        const float v = pre[(size_t)c];
        DSTOK_CHECK(std::isfinite(v), "fsq: non-finite pre-activation");
        const float bounded = std::tanh(v);
        const int k = grid_level(bounded, cfg.levels);
        levels[(size_t)c] = k;
        if (quantized) (*quantized)[(size_t)c] = grid_value(k, cfg.levels);
    }
    code.flat_per_layer.push_back(fsq_flat_from_levels(levels, cfg.levels));
    code.levels_per_layer.push_back(std::move(levels));
    return code;
}

std::vector<float> fsq_dequantize(int64_t flat, const FsqConfig & cfg) {
    const std::vector<int> levels = fsq_levels_from_flat(flat, cfg);
    std::vector<float> out((size_t)cfg.channels);
    for (int c = 0; c < cfg.channels; ++c) out[(size_t)c] = grid_value(levels[(size_t)c], cfg.levels);
    return out;
}

FsqCode fsq_stack_quantize(const std::vector<float> & pre, const FsqConfig & cfg,
                           std::vector<float> * quantized) {
    cfg.validate();
    DSTOK_CHECK((int)pre.size() == cfg.channels, "fsq: expected %d channels, got %zu",
                cfg.channels, pre.size());
    FsqCode code;
    std::vector<float> residual = pre;
    std::vector<float> sum((size_t)cfg.channels, 0.0f);
    for (int l = 0; l < cfg.layers; ++l) {
        std::vector<float> q;
        FsqCode layer = fsq_quantize(residual, cfg, &q);
        code.levels_per_layer.push_back(std::move(layer.levels_per_layer[0]));
        code.flat_per_layer.push_back(layer.flat_per_layer[0]);
        for (int c = 0; c < cfg.channels; ++c) {
            const float bounded = std::tanh(residual[(size_t)c]);
            sum[(size_t)c] += q[(size_t)c];
            residual[(size_t)c] = bounded - q[(size_t)c];
        }
    }
    if (quantized) *quantized = sum;
    return code;
}

Tensor fsq_forward(Graph & g, const Tensor & pre, const FsqConfig & cfg,
                   std::vector<std::vector<int64_t>> * flat_ids) {
    cfg.validate();
    DSTOK_CHECK(pre.rank() == 2 && pre.dim(1) == cfg.channels,
                "fsq_forward: pre must be [T,%d], got %s", cfg.channels,
                shape_str(pre.shape()).c_str());
    const int t = pre.dim(0);
    if (flat_ids) flat_ids->assign((size_t)cfg.layers, std::vector<int64_t>((size_t)t, 0));
    Tensor residual = pre;
    Tensor sum;
    for (int l = 0; l < cfg.layers; ++l) {
        Tensor bounded = tanh_op(g, residual);
        Tensor q = round_grid_ste(g, bounded, cfg.levels);
        if (flat_ids) {
            std::vector<int> levels((size_t)cfg.channels);
            for (int r = 0; r < t; ++r) {
                for (int c = 0; c < cfg.channels; ++c)
                    levels[(size_t)c] = grid_level(bounded.at((int64_t)r * cfg.channels + c), cfg.levels);
                (*flat_ids)[(size_t)l][(size_t)r] = fsq_flat_from_levels(levels, cfg.levels);
            }
        }
        sum = l == 0 ? q : add(g, sum, q);
        if (l + 1 < cfg.layers) residual = sub(g, bounded, q);
    }
    return sum;
}

} // namespace dstok
