#pragma once

// Autodiff primitives. Every op validates shapes, computes the forward value
// eagerly, and (when the graph is recording and an input requires grad)
// records a closure that accumulates gradients into its inputs.
//
// Broadcasting is deliberately narrow: the second operand of add/sub/mul may
// be a scalar [1], or a row vector whose column count matches, broadcast over
// rows. Everything else must match exactly.

#include "dstok/tensor.hpp"

#include <vector>

namespace dstok {

// elementwise (b may broadcast as scalar or row vector)
Tensor add(Graph & g, const Tensor & a, const Tensor & b);
Tensor sub(Graph & g, const Tensor & a, const Tensor & b);
Tensor mul(Graph & g, const Tensor & a, const Tensor & b);

Tensor scale(Graph & g, const Tensor & a, float c);
Tensor add_const(Graph & g, const Tensor & a, float c);

// unary
Tensor tanh_op(Graph & g, const Tensor & a);
Tensor sigmoid_op(Graph & g, const Tensor & a);
Tensor gelu_op(Graph & g, const Tensor & a);
Tensor elu_op(Graph & g, const Tensor & a);
Tensor sqrt_op(Graph & g, const Tensor & a);

// matrix product of 2-D (or rank-1-as-row) tensors; ta/tb treat the stored
// buffer as transposed
Tensor matmul(Graph & g, const Tensor & a, const Tensor & b, bool ta = false, bool tb = false);

// x[T,Cin] * w[Cout,K,Cin] + b -> [T_out,Cout]; bias optional (undefined Tensor)
Tensor conv1d(Graph & g, const Tensor & x, const Tensor & w, const Tensor & bias,
              int stride, int pad);
// x[T,Cin] * w[Cin,K,Cout] + b -> [(T-1)*stride-2*pad+K, Cout]
Tensor convtr1d(Graph & g, const Tensor & x, const Tensor & w, const Tensor & bias,
                int stride, int pad);

// per-row layer norm; gamma/beta optional (undefined tensors -> pure normalization)
Tensor layer_norm(Graph & g, const Tensor & x, const Tensor & gamma, const Tensor & beta,
                  float eps = 1e-5f);

Tensor softmax_rows(Graph & g, const Tensor & x);
Tensor log_softmax_rows(Graph & g, const Tensor & x);

// softmax over the time axis (rows) per column, rows >= valid_len masked out
Tensor masked_softmax_time(Graph & g, const Tensor & s, int valid_len);

// table[V,D] gathered at ids -> [len(ids), D]
Tensor embedding(Graph & g, const Tensor & table, const std::vector<int> & ids);

Tensor slice_rows(Graph & g, const Tensor & x, int r0, int r1);
Tensor concat_cols(Graph & g, const Tensor & a, const Tensor & b);
Tensor concat_rows(Graph & g, const std::vector<Tensor> & parts);

// linear interpolation along rows to t_out rows (endpoints aligned)
Tensor interp_linear_rows(Graph & g, const Tensor & x, int t_out);

Tensor reduce_sum_all(Graph & g, const Tensor & x);
Tensor reduce_mean_all(Graph & g, const Tensor & x);
// sum over rows -> row vector [cols]
Tensor colsum(Graph & g, const Tensor & x);

// cosine similarity of two vectors -> scalar
Tensor cosine_sim(Graph & g, const Tensor & a, const Tensor & b);

// mean squared error over rows [r0,r1) of pred vs target (target is constant)
Tensor mse_frames(Graph & g, const Tensor & pred, const Tensor & target, int r0, int r1);

// negative log likelihood: -logp[idx] for a row vector of log-probabilities
Tensor nll_index(Graph & g, const Tensor & logp, int idx);

// fused multi-head attention with rotary position embedding on queries/keys.
// q[T,D], k[S,D], v[S,D]; head dim D/heads must be even when rope is on.
struct AttentionSpec {
    int heads = 4;
    bool rope = true;
    float rope_base = 10000.0f;
    int q_pos0 = 0;
    int k_pos0 = 0;
};
Tensor attention(Graph & g, const Tensor & q, const Tensor & k, const Tensor & v,
                 const AttentionSpec & spec);

// snap each element (already bounded to (-1,1)) to the nearest of the
// n_levels grid points {(2k-(n-1))/(n-1)}; ties to the lower level; gradient
// passes through unchanged (straight-through estimator)
Tensor round_grid_ste(Graph & g, const Tensor & y, int n_levels);

// grid helpers shared with the quantizer
float grid_value(int level, int n_levels);
int   grid_level(float bounded, int n_levels); // tie -> lower level

} // namespace dstok
