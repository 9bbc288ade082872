#pragma once

// Finite scalar quantization: each channel is bounded by tanh to (-1,1) and
// snapped to a fixed grid of `levels` points; the codebook is the grid
// product, no learned entries. Gradients pass straight through the rounding.

#include "dstok/ops.hpp"

namespace dstok {

struct FsqConfig {
    int levels = 4;   // N, points per channel
    int channels = 8; // C
    int layers = 1;   // L, stacked residual layers

    int64_t codebook_size() const {
        int64_t n = 1;
        for (int i = 0; i < channels; ++i) n *= levels;
        return n;
    }
    void validate() const {
        DSTOK_CHECK(levels >= 2 && channels >= 1 && layers >= 1, "fsq: bad config");
        DSTOK_CHECK(codebook_size() <= (int64_t)1 << 31, "fsq: codebook too large");
    }
    int bits_per_frame() const {
        return (int)std::ceil(std::log2((double)codebook_size())) * layers;
    }
};

struct FsqCode {
    std::vector<std::vector<int>> levels_per_layer; // [L][C]
    std::vector<int64_t> flat_per_layer;            // [L]
};

// mixed-radix index: flat = sum_c level_c * N^c
int64_t fsq_flat_from_levels(const std::vector<int> & levels, int n_levels);
std::vector<int> fsq_levels_from_flat(int64_t flat, const FsqConfig & cfg);

// single-layer quantization of one pre-activation vector (tanh applied inside)
FsqCode fsq_quantize(const std::vector<float> & pre, const FsqConfig & cfg,
                     std::vector<float> * quantized = nullptr);

// grid vector for a flat index; quantize(dequantize(i)) returns i for all i
std::vector<float> fsq_dequantize(int64_t flat, const FsqConfig & cfg);

// L-layer residual stack on one vector: layer l quantizes what the layers
// before it left over; the output is the sum of the per-layer grid vectors
FsqCode fsq_stack_quantize(const std::vector<float> & pre, const FsqConfig & cfg,
                           std::vector<float> * quantized = nullptr);

// graph version over a [T,C] pre-activation block; returns the summed
// quantized values [T,C], differentiable through tanh + STE rounding. If
// flat_ids is non-null it receives [L][T] flat codes consistent with the
// forward values.
Tensor fsq_forward(Graph & g, const Tensor & pre, const FsqConfig & cfg,
                   std::vector<std::vector<int64_t>> * flat_ids = nullptr);

} // namespace dstok
