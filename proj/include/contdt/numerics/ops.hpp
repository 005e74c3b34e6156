#pragma once

// Differentiable primitives. Each op evaluates its forward result, stores
// it on the tape and (when recording and any input requires a gradient)
// registers the matching backward rule. Matrices are the trailing two
// dimensions of a tensor; leading dimensions are folded into rows.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "contdt/numerics/tape.hpp"
#include "contdt/numerics/tensor.hpp"

namespace contdt::ops {

inline constexpr Scalar kLayerNormEps = Scalar(1e-5);

/// [m x k] * [k x n] -> [m x n].
Tensor& matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// x [m x in], weight [out x in], optional bias [out] -> x * weight^T + bias.
Tensor& linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor* bias);

Tensor& add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor& scale(Tape& tape, const Tensor& a, Scalar factor);
Tensor& relu(Tape& tape, const Tensor& x);
Tensor& tanh(Tape& tape, const Tensor& x);

/// Row-wise normalisation over the last dimension followed by gain/bias.
Tensor& layernorm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps = kLayerNormEps);

/// scores: vertically stacked [block x block] matrices. Each row i (within
/// its block) is normalised over columns 0..i; later columns are exactly 0.
Tensor& softmax_causal(Tape& tape, const Tensor& scores, std::size_t block);

/// Per block of `block` rows: factor * A_b * B_b^T. Inputs [nb*block x c],
/// output [nb*block x block].
Tensor& block_matmul_bt(Tape& tape, const Tensor& a, const Tensor& b, std::size_t block, Scalar factor);

/// Per block: P_b * V_b. p [nb*block x block], v [nb*block x c].
Tensor& block_matmul(Tape& tape, const Tensor& p, const Tensor& v, std::size_t block);

/// Gathers rows of x (indices may repeat); backward scatters by addition.
Tensor& take_rows(Tape& tape, const Tensor& x, std::vector<std::size_t> indices);

/// Stacks matrices with equal column count.
Tensor& concat_rows(Tape& tape, const std::vector<const Tensor*>& parts);

/// Columns [begin, end) of every row.
Tensor& slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);
Tensor& concat_cols(Tape& tape, const std::vector<const Tensor*>& parts);

/// Mean of squared differences over all elements.
Tensor& mse(Tape& tape, const Tensor& pred, const Tensor& target);

/// Squared error averaged over the elements of rows with non-zero weight:
/// sum_r w_r sum_c (p - t)^2 / (sum_r w_r * cols). Zero total weight gives 0.
Tensor& masked_mse(Tape& tape, const Tensor& pred, const Tensor& target, std::span<const Scalar> row_weights);

Tensor& sum(Tape& tape, const Tensor& x);

/// sum_i w_i * t_i over single-element tensors.
Tensor& weighted_sum(Tape& tape, const std::vector<std::pair<const Tensor*, Scalar>>& terms);

/// sum_i weight_i * (theta_i - anchor_i)^2; gradient flows to theta only.
Tensor& weighted_sq_diff(Tape& tape, const Tensor& theta, const Tensor& anchor, const Tensor& weight);

/// u.v / (|u||v|); 0 when either vector is zero.
Scalar cosine_similarity(std::span<const Scalar> u, std::span<const Scalar> v);

}  // namespace contdt::ops
