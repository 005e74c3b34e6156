#include "contdt/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace contdt::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

inline Scalar load_a(const GemmArgs& g, std::size_t i, std::size_t p) {
    return g.trans_a == Trans::No ? g.a[i * g.k + p] : g.a[p * g.m + i];
}

inline Scalar load_b(const GemmArgs& g, std::size_t p, std::size_t j) {
    return g.trans_b == Trans::No ? g.b[p * g.n + j] : g.b[j * g.k + p];
}

}  // namespace

void gemm_reference(const GemmArgs& g) {
    for (std::size_t i = 0; i < g.m; ++i) {
        for (std::size_t j = 0; j < g.n; ++j) {
            Scalar acc = 0;
            for (std::size_t p = 0; p < g.k; ++p) acc += load_a(g, i, p) * load_b(g, p, j);
            Scalar& out = g.c[i * g.n + j];
            out = g.accumulate ? out + acc : acc;
        }
    }
}

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 32;

std::size_t round_up(std::size_t x, std::size_t to) { return (x + to - 1) / to * to; }

// One full register tile of C from zero-padded row-major A (rows x k) and
// B (k x ldb). Every element is summed over p = 0..k-1 from zero, as in the
// reference, so padding never changes the valid entries.
inline void gemm_tile(const Scalar* a, const Scalar* b, Scalar* c, std::size_t ldb, std::size_t k) {
    Scalar acc[kTileRows][kTileCols] = {};
    for (std::size_t p = 0; p < k; ++p) {
        const Scalar* bp = b + p * ldb;
        for (std::size_t r = 0; r < kTileRows; ++r) {
            const Scalar arp = a[r * k + p];
            for (std::size_t j = 0; j < kTileCols; ++j) acc[r][j] += arp * bp[j];
        }
    }
    for (std::size_t r = 0; r < kTileRows; ++r)
        for (std::size_t j = 0; j < kTileCols; ++j) c[r * ldb + j] = acc[r][j];
}

}  // namespace

void gemm(const GemmArgs& g) {
    if (g.m == 0 || g.n == 0) return;
    const std::size_t m = g.m, n = g.n, k = g.k;
    const std::size_t mp = round_up(m, kTileRows), np = round_up(n, kTileCols);
    std::vector<Scalar> a(mp * k, Scalar{0}), b(k * np, Scalar{0}), c(mp * np);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p)
            a[i * k + p] = g.trans_a == Trans::Yes ? g.a[p * m + i] : g.a[i * k + p];
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j)
            b[p * np + j] = g.trans_b == Trans::Yes ? g.b[j * k + p] : g.b[p * n + j];

    const auto row_tiles = static_cast<std::int64_t>(mp / kTileRows);
    const bool parallel = m * n * k >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t t = 0; t < row_tiles; ++t) {
        const std::size_t i0 = static_cast<std::size_t>(t) * kTileRows;
        for (std::size_t j0 = 0; j0 < np; j0 += kTileCols)
            gemm_tile(a.data() + i0 * k, b.data() + j0, c.data() + i0 * np + j0, np, k);
    }

    for (std::size_t i = 0; i < m; ++i) {
        Scalar* out = g.c + i * n;
        const Scalar* src = c.data() + i * np;
        if (g.accumulate) {
            for (std::size_t j = 0; j < n; ++j) out[j] += src[j];
        } else {
            std::copy(src, src + n, out);
        }
    }
}

namespace {

inline void layernorm_row(std::size_t cols, const Scalar* x, const Scalar* gain, const Scalar* bias, Scalar eps,
                          Scalar* y, Scalar* xhat, Scalar* inv_std) {
    Scalar mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += x[c];
    mean /= static_cast<Scalar>(cols);
    Scalar var = 0;
    for (std::size_t c = 0; c < cols; ++c) {
        const Scalar d = x[c] - mean;
        var += d * d;
    }
    var /= static_cast<Scalar>(cols);
    const Scalar inv = Scalar{1} / std::sqrt(var + eps);
    *inv_std = inv;
    for (std::size_t c = 0; c < cols; ++c) {
        const Scalar h = (x[c] - mean) * inv;
        xhat[c] = h;
        y[c] = h * gain[c] + bias[c];
    }
}

inline void softmax_row(std::size_t block, std::size_t query, const Scalar* s, Scalar* p) {
    Scalar mx = s[0];
    for (std::size_t j = 1; j <= query; ++j) mx = std::max(mx, s[j]);
    Scalar total = 0;
    for (std::size_t j = 0; j <= query; ++j) {
        p[j] = std::exp(s[j] - mx);
        total += p[j];
    }
    const Scalar inv = Scalar{1} / total;
    for (std::size_t j = 0; j <= query; ++j) p[j] *= inv;
    for (std::size_t j = query + 1; j < block; ++j) p[j] = 0;
}

}  // namespace

void layernorm_rows_reference(std::size_t rows, std::size_t cols, const Scalar* x, const Scalar* gain,
                              const Scalar* bias, Scalar eps, Scalar* y, Scalar* xhat, Scalar* inv_std) {
    for (std::size_t r = 0; r < rows; ++r)
        layernorm_row(cols, x + r * cols, gain, bias, eps, y + r * cols, xhat + r * cols, inv_std + r);
}

void layernorm_rows(std::size_t rows, std::size_t cols, const Scalar* x, const Scalar* gain, const Scalar* bias,
                    Scalar eps, Scalar* y, Scalar* xhat, Scalar* inv_std) {
    const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
    for (std::int64_t r = 0; r < n; ++r) {
        const auto o = static_cast<std::size_t>(r) * cols;
        layernorm_row(cols, x + o, gain, bias, eps, y + o, xhat + o, inv_std + r);
    }
}

void softmax_causal_rows_reference(std::size_t rows, std::size_t block, const Scalar* scores, Scalar* probs) {
    for (std::size_t r = 0; r < rows; ++r) softmax_row(block, r % block, scores + r * block, probs + r * block);
}

void softmax_causal_rows(std::size_t rows, std::size_t block, const Scalar* scores, Scalar* probs) {
    const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * block >= kParallelWork)
    for (std::int64_t r = 0; r < n; ++r) {
        const auto row = static_cast<std::size_t>(r);
        softmax_row(block, row % block, scores + row * block, probs + row * block);
    }
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace contdt::kernels
