#pragma once

// Dense inner loops behind the tensor ops.
//
// Every kernel comes in two flavours with identical per-element
// accumulation order: a plain serial reference used by the tests, and the
// production path whose outer (row) loop is OpenMP-parallel. Rows never
// share accumulators, so the two agree bit-for-bit at any thread count.

#include <cstddef>

#include "contdt/numerics/tensor.hpp"

namespace contdt::kernels {

enum class Trans { No, Yes };

struct GemmArgs {
    Trans trans_a = Trans::No;
    Trans trans_b = Trans::No;
    std::size_t m = 0;  // rows of op(A) and C
    std::size_t n = 0;  // cols of op(B) and C
    std::size_t k = 0;  // shared dimension
    const Scalar* a = nullptr;
    const Scalar* b = nullptr;
    Scalar* c = nullptr;
    bool accumulate = false;  // C += op(A)op(B) instead of C = op(A)op(B)
};

/// C (+)= op(A) op(B). A is m x k (or k x m when transposed), B is k x n
/// (or n x k when transposed). For each C[i][j] the products are summed
/// for p = 0..k-1 starting from zero, then stored or added to C.
void gemm_reference(const GemmArgs& args);
void gemm(const GemmArgs& args);

/// Per-row layer normalisation: y = (x - mean) / sqrt(var + eps) * gain + bias.
/// Writes the normalised rows and reciprocal standard deviations for backward.
void layernorm_rows_reference(std::size_t rows, std::size_t cols, const Scalar* x, const Scalar* gain,
                              const Scalar* bias, Scalar eps, Scalar* y, Scalar* xhat, Scalar* inv_std);
void layernorm_rows(std::size_t rows, std::size_t cols, const Scalar* x, const Scalar* gain, const Scalar* bias,
                    Scalar eps, Scalar* y, Scalar* xhat, Scalar* inv_std);

/// Softmax over blocks of square causal score matrices stacked vertically.
/// Row r belongs to query position r % block; entries j > r % block are 0.
void softmax_causal_rows_reference(std::size_t rows, std::size_t block, const Scalar* scores, Scalar* probs);
void softmax_causal_rows(std::size_t rows, std::size_t block, const Scalar* scores, Scalar* probs);

/// Number of threads the parallel kernels may use (1 without OpenMP).
int max_threads();

}  // namespace contdt::kernels
