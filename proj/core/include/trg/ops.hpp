#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trg/tensor.hpp"

// Differentiable primitives. "Rows" always means the last axis: a tensor of
// shape [..., n] is treated as numel/n rows of length n.
namespace trg::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
// Batched [B x m x k] * [B x k x n] -> [B x m x n].
Tensor bmm(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// [B x m x n] -> [B x n x m].
Tensor transpose_last2(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
// x [m x n] + bias [n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);

// out[i] = a.flat[index[i]], or 0 where index[i] < 0. Backward scatter-adds.
// Covers slicing, permutation, patch extraction and zero-padded im2col.
Tensor gather(const Tensor& a, std::span<const std::int64_t> index, Shape out_shape);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// Mean over rows of sum_j p_ij (ln p_ij - ln q_ij). Entries with p_ij == 0
// contribute 0. q is clamped below at `clamp_eps`; pass 0 to get a
// NumericError instead when q_ij == 0 < p_ij.
Tensor kl_rows(const Tensor& p, const Tensor& q, double clamp_eps = 1e-12);

// Same quantity computed from logits through log-softmax, stable for large
// logit gaps. Row distribution p = softmax(p_logits), q = softmax(q_logits).
Tensor kl_rows_from_logits(const Tensor& p_logits, const Tensor& q_logits);

Tensor mse(const Tensor& a, const Tensor& b);

// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Each row divided by max(||row||, eps).
Tensor row_normalize(const Tensor& x, double eps = 1e-12);

// [S x D] -> [S x S] with out_ij = ||x_i - x_j||^2, summed coordinate by
// coordinate so the result is exactly symmetric and non-negative.
Tensor pairwise_sq_distances(const Tensor& x);

// Diagonal of a square matrix as a vector.
Tensor diagonal(const Tensor& a);

}  // namespace trg::ops
