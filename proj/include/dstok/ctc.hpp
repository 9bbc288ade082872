#pragma once

// CTC negative log-likelihood over blank-augmented monotonic alignments,
// computed by the forward algorithm in log space. The backward pass uses the
// forward/backward posteriors, differentiable w.r.t. the input log-probs.

#include "dstok/ops.hpp"

#include <vector>

namespace dstok {

// frames needed for a target: len + number of adjacent duplicate pairs
int ctc_min_frames(const std::vector<int> & target);

// log_probs [T, V] rows must be log-softmax normalized; blank is an id in
// [0,V); target symbols must avoid blank. Infeasible targets (T too short)
// raise an error rather than returning -inf.
Tensor ctc_loss(Graph & g, const Tensor & log_probs, const std::vector<int> & target, int blank);

// argmax per frame, collapse repeats, drop blanks
std::vector<int> ctc_greedy_decode(const Tensor & log_probs, int blank);
std::vector<int> ctc_greedy_decode(const std::vector<float> & log_probs, int t, int vocab, int blank);

} // namespace dstok
