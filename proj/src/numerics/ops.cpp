#include "contdt/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "contdt/errors.hpp"
#include "contdt/numerics/kernels.hpp"

namespace contdt::ops {

namespace {

using kernels::GemmArgs;
using kernels::Trans;

bool any_grad(Tape& tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape.recording()) return false;
    bool any = false;
    for (const Tensor* t : inputs) {
        if (t && t->requires_grad()) {
            tape.track(*t);
            any = true;
        }
    }
    return any;
}

Tensor& emit(Tape& tape, Tensor value, bool grad) {
    value.set_requires_grad(grad);
    return tape.hold(std::move(value));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Shape matrix_shape(std::size_t r, std::size_t c) { return Shape{r, c}; }

}  // namespace

Tensor& matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul expects rank-2 operands");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const bool grad = any_grad(tape, {&a, &b});
    Tensor out(matrix_shape(m, n));
    kernels::gemm({Trans::No, Trans::No, m, n, k, a.data(), b.data(), out.data(), false});
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &a, &b, m, n, k] {
            if (!res.has_grad()) return;
            const Scalar* dc = res.grad().data();
            if (a.requires_grad())
                kernels::gemm({Trans::No, Trans::Yes, m, k, n, dc, b.data(), a.grad_buffer(), true});
            if (b.requires_grad())
                kernels::gemm({Trans::Yes, Trans::No, k, n, m, a.data(), dc, b.grad_buffer(), true});
        });
    }
    return res;
}

Tensor& linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor* bias) {
    if (weight.rank() != 2) throw DimensionError("linear weight must be rank 2");
    const std::size_t m = x.rows(), in = x.cols(), out_dim = weight.rows();
    if (weight.cols() != in)
        throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
    if (bias && bias->numel() != out_dim) throw DimensionError("linear: bias size mismatch");
    const bool grad = any_grad(tape, {&x, &weight, bias});
    Tensor out(matrix_shape(m, out_dim));
    kernels::gemm({Trans::No, Trans::Yes, m, out_dim, in, x.data(), weight.data(), out.data(), false});
    if (bias) {
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < out_dim; ++c) out.at(r, c) += (*bias)[c];
    }
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &x, &weight, bias, m, in, out_dim] {
            if (!res.has_grad()) return;
            const Scalar* dy = res.grad().data();
            if (x.requires_grad())
                kernels::gemm({Trans::No, Trans::No, m, in, out_dim, dy, weight.data(), x.grad_buffer(), true});
            if (weight.requires_grad())
                kernels::gemm({Trans::Yes, Trans::No, out_dim, in, m, dy, x.data(), weight.grad_buffer(), true});
            if (bias && bias->requires_grad()) {
                Scalar* db = bias->grad_buffer();
                for (std::size_t c = 0; c < out_dim; ++c) {
                    Scalar acc = 0;
                    for (std::size_t r = 0; r < m; ++r) acc += dy[r * out_dim + c];
                    db[c] += acc;
                }
            }
        });
    }
    return res;
}

Tensor& add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const bool grad = any_grad(tape, {&a, &b});
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &a, &b] {
            if (!res.has_grad()) return;
            if (a.requires_grad()) a.accumulate_grad(res.grad());
            if (b.requires_grad()) b.accumulate_grad(res.grad());
        });
    }
    return res;
}

Tensor& scale(Tape& tape, const Tensor& a, Scalar factor) {
    const bool grad = any_grad(tape, {&a});
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * factor;
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &a, factor] {
            if (!res.has_grad()) return;
            auto dy = res.grad();
            Scalar* da = a.grad_buffer();
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * factor;
        });
    }
    return res;
}

Tensor& relu(Tape& tape, const Tensor& x) {
    const bool grad = any_grad(tape, {&x});
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] > 0 ? x[i] : Scalar{0};
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &x] {
            if (!res.has_grad()) return;
            auto dy = res.grad();
            Scalar* dx = x.grad_buffer();
            for (std::size_t i = 0; i < dy.size(); ++i)
                if (x[i] > 0) dx[i] += dy[i];
        });
    }
    return res;
}

Tensor& tanh(Tape& tape, const Tensor& x) {
    const bool grad = any_grad(tape, {&x});
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(x[i]);
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &x] {
            if (!res.has_grad()) return;
            auto dy = res.grad();
            Scalar* dx = x.grad_buffer();
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (Scalar{1} - res[i] * res[i]);
        });
    }
    return res;
}

Tensor& layernorm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps) {
    const std::size_t rows = x.rows(), cols = x.cols();
    if (cols < 2) throw DimensionError("layernorm needs at least 2 features");
    if (gain.numel() != cols || bias.numel() != cols) throw DimensionError("layernorm: gain/bias size mismatch");
    const bool grad = any_grad(tape, {&x, &gain, &bias});
    Tensor out(x.shape());
    std::vector<Scalar> xhat(x.numel());
    std::vector<Scalar> inv_std(rows);
    kernels::layernorm_rows(rows, cols, x.data(), gain.data(), bias.data(), eps, out.data(), xhat.data(),
                            inv_std.data());
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &x, &gain, &bias, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            if (!res.has_grad()) return;
            const Scalar* dy = res.grad().data();
            if (gain.requires_grad() || bias.requires_grad()) {
                Scalar* dg = gain.requires_grad() ? gain.grad_buffer() : nullptr;
                Scalar* db = bias.requires_grad() ? bias.grad_buffer() : nullptr;
                for (std::size_t c = 0; c < cols; ++c) {
                    Scalar sg = 0, sb = 0;
                    for (std::size_t r = 0; r < rows; ++r) {
                        sg += dy[r * cols + c] * xhat[r * cols + c];
                        sb += dy[r * cols + c];
                    }
                    if (dg) dg[c] += sg;
                    if (db) db[c] += sb;
                }
            }
            if (x.requires_grad()) {
                Scalar* dx = x.grad_buffer();
                const Scalar inv_n = Scalar{1} / static_cast<Scalar>(cols);
                for (std::size_t r = 0; r < rows; ++r) {
                    const Scalar* dyr = dy + r * cols;
                    const Scalar* hr = xhat.data() + r * cols;
                    Scalar mean_d = 0, mean_dh = 0;
                    for (std::size_t c = 0; c < cols; ++c) {
                        const Scalar d = dyr[c] * gain[c];
                        mean_d += d;
                        mean_dh += d * hr[c];
                    }
                    mean_d *= inv_n;
                    mean_dh *= inv_n;
                    for (std::size_t c = 0; c < cols; ++c) {
                        const Scalar d = dyr[c] * gain[c];
                        dx[r * cols + c] += inv_std[r] * (d - mean_d - hr[c] * mean_dh);
                    }
                }
            }
        });
    }
    return res;
}

Tensor& softmax_causal(Tape& tape, const Tensor& scores, std::size_t block) {
    if (block == 0 || scores.cols() != block || scores.rows() % block != 0)
        throw DimensionError("softmax_causal expects stacked square blocks, got " + shape_str(scores.shape()));
    const bool grad = any_grad(tape, {&scores});
    const std::size_t rows = scores.rows();
    Tensor out(scores.shape());
    kernels::softmax_causal_rows(rows, block, scores.data(), out.data());
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &scores, rows, block] {
            if (!res.has_grad()) return;
            const Scalar* dp = res.grad().data();
            Scalar* ds = scores.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t q = r % block;
                const Scalar* p = res.data() + r * block;
                const Scalar* g = dp + r * block;
                Scalar dot = 0;
                for (std::size_t j = 0; j <= q; ++j) dot += p[j] * g[j];
                for (std::size_t j = 0; j <= q; ++j) ds[r * block + j] += p[j] * (g[j] - dot);
            }
        });
    }
    return res;
}

Tensor& block_matmul_bt(Tape& tape, const Tensor& a, const Tensor& b, std::size_t block, Scalar factor) {
    require_same_shape(a, b, "block_matmul_bt");
    if (block == 0 || a.rows() % block != 0) throw DimensionError("block_matmul_bt: rows not a multiple of block");
    const bool grad = any_grad(tape, {&a, &b});
    const std::size_t nb = a.rows() / block, c = a.cols();
    Tensor out(matrix_shape(a.rows(), block));
    for (std::size_t w = 0; w < nb; ++w) {
        kernels::gemm({Trans::No, Trans::Yes, block, block, c, a.data() + w * block * c, b.data() + w * block * c,
                       out.data() + w * block * block, false});
    }
    for (auto& v : out.values()) v *= factor;
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &a, &b, nb, block, c, factor] {
            if (!res.has_grad()) return;
            std::vector<Scalar> ds(res.grad().begin(), res.grad().end());
            for (auto& v : ds) v *= factor;
            for (std::size_t w = 0; w < nb; ++w) {
                const Scalar* dsw = ds.data() + w * block * block;
                if (a.requires_grad())
                    kernels::gemm({Trans::No, Trans::No, block, c, block, dsw, b.data() + w * block * c,
                                   a.grad_buffer() + w * block * c, true});
                if (b.requires_grad())
                    kernels::gemm({Trans::Yes, Trans::No, block, c, block, dsw, a.data() + w * block * c,
                                   b.grad_buffer() + w * block * c, true});
            }
        });
    }
    return res;
}

Tensor& block_matmul(Tape& tape, const Tensor& p, const Tensor& v, std::size_t block) {
    if (block == 0 || p.cols() != block || p.rows() != v.rows() || p.rows() % block != 0)
        throw DimensionError("block_matmul: " + shape_str(p.shape()) + " x " + shape_str(v.shape()));
    const bool grad = any_grad(tape, {&p, &v});
    const std::size_t nb = p.rows() / block, c = v.cols();
    Tensor out(matrix_shape(v.rows(), c));
    for (std::size_t w = 0; w < nb; ++w) {
        kernels::gemm({Trans::No, Trans::No, block, c, block, p.data() + w * block * block, v.data() + w * block * c,
                       out.data() + w * block * c, false});
    }
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &p, &v, nb, block, c] {
            if (!res.has_grad()) return;
            const Scalar* dout = res.grad().data();
            for (std::size_t w = 0; w < nb; ++w) {
                const Scalar* dw = dout + w * block * c;
                if (p.requires_grad())
                    kernels::gemm({Trans::No, Trans::Yes, block, block, c, dw, v.data() + w * block * c,
                                   p.grad_buffer() + w * block * block, true});
                if (v.requires_grad())
                    kernels::gemm({Trans::Yes, Trans::No, block, c, block, p.data() + w * block * block, dw,
                                   v.grad_buffer() + w * block * c, true});
            }
        });
    }
    return res;
}

Tensor& take_rows(Tape& tape, const Tensor& x, std::vector<std::size_t> indices) {
    const std::size_t cols = x.cols(), rows = x.rows();
    if (indices.empty()) throw DimensionError("take_rows: no indices");
    for (auto i : indices)
        if (i >= rows) throw DimensionError("take_rows: index " + std::to_string(i) + " out of " + std::to_string(rows));
    const bool grad = any_grad(tape, {&x});
    Tensor out(matrix_shape(indices.size(), cols));
    for (std::size_t r = 0; r < indices.size(); ++r)
        std::copy_n(x.data() + indices[r] * cols, cols, out.data() + r * cols);
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &x, cols, idx = std::move(indices)] {
            if (!res.has_grad()) return;
            const Scalar* dy = res.grad().data();
            Scalar* dx = x.grad_buffer();
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t c = 0; c < cols; ++c) dx[idx[r] * cols + c] += dy[r * cols + c];
        });
    }
    return res;
}

Tensor& concat_rows(Tape& tape, const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
    const std::size_t cols = parts.front()->cols();
    std::size_t rows = 0;
    bool grad = false;
    for (const Tensor* t : parts) {
        if (t->cols() != cols) throw DimensionError("concat_rows: column counts differ");
        rows += t->rows();
        grad = any_grad(tape, {t}) || grad;
    }
    Tensor out(matrix_shape(rows, cols));
    std::size_t off = 0;
    for (const Tensor* t : parts) {
        std::copy(t->values().begin(), t->values().end(), out.data() + off);
        off += t->numel();
    }
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, parts] {
            if (!res.has_grad()) return;
            auto dy = res.grad();
            std::size_t o = 0;
            for (const Tensor* t : parts) {
                if (t->requires_grad()) t->accumulate_grad(dy.subspan(o, t->numel()));
                o += t->numel();
            }
        });
    }
    return res;
}

Tensor& slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t rows = x.rows(), cols = x.cols();
    if (begin >= end || end > cols) throw DimensionError("slice_cols: bad range");
    const std::size_t w = end - begin;
    const bool grad = any_grad(tape, {&x});
    Tensor out(matrix_shape(rows, w));
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data() + r * cols + begin, w, out.data() + r * w);
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, &x, rows, cols, begin, w] {
            if (!res.has_grad()) return;
            const Scalar* dy = res.grad().data();
            Scalar* dx = x.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < w; ++c) dx[r * cols + begin + c] += dy[r * w + c];
        });
    }
    return res;
}

Tensor& concat_cols(Tape& tape, const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
    const std::size_t rows = parts.front()->rows();
    std::size_t cols = 0;
    bool grad = false;
    for (const Tensor* t : parts) {
        if (t->rows() != rows) throw DimensionError("concat_cols: row counts differ");
        cols += t->cols();
        grad = any_grad(tape, {t}) || grad;
    }
    Tensor out(matrix_shape(rows, cols));
    std::size_t off = 0;
    for (const Tensor* t : parts) {
        const std::size_t w = t->cols();
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(t->data() + r * w, w, out.data() + r * cols + off);
        off += w;
    }
    Tensor& res = emit(tape, std::move(out), grad);
    if (grad) {
        tape.on_backward([&res, parts, rows, cols] {
            if (!res.has_grad()) return;
            const Scalar* dy = res.grad().data();
            std::size_t o = 0;
            for (const Tensor* t : parts) {
                const std::size_t w = t->cols();
                if (t->requires_grad()) {
                    Scalar* dt = t->grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < w; ++c) dt[r * w + c] += dy[r * cols + o + c];
                }
                o += w;
            }
        });
    }
    return res;
}

Tensor& mse(Tape& tape, const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse");
    std::vector<Scalar> ones(pred.rows(), Scalar{1});
    return masked_mse(tape, pred, target, ones);
}

Tensor& masked_mse(Tape& tape, const Tensor& pred, const Tensor& target, std::span<const Scalar> row_weights) {
    require_same_shape(pred, target, "masked_mse");
    const std::size_t rows = pred.rows(), cols = pred.cols();
    if (row_weights.size() != rows) throw DimensionError("masked_mse: one weight per row required");
    const bool grad = any_grad(tape, {&pred, &target});
    const Scalar total_w = std::accumulate(row_weights.begin(), row_weights.end(), Scalar{0});
    const Scalar denom = total_w * static_cast<Scalar>(cols);
    Scalar acc = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (row_weights[r] == 0) continue;
        Scalar row = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            const Scalar d = pred.at(r, c) - target.at(r, c);
            row += d * d;
        }
        acc += row_weights[r] * row;
    }
    Tensor& res = emit(tape, Tensor::scalar(denom > 0 ? acc / denom : Scalar{0}), grad);
    if (grad && denom > 0) {
        tape.on_backward([&res, &pred, &target, rows, cols, denom,
                          w = std::vector<Scalar>(row_weights.begin(), row_weights.end())] {
            if (!res.has_grad()) return;
            const Scalar g = res.grad()[0] * Scalar{2} / denom;
            Scalar* dp = pred.requires_grad() ? pred.grad_buffer() : nullptr;
            Scalar* dt = target.requires_grad() ? target.grad_buffer() : nullptr;
            for (std::size_t r = 0; r < rows; ++r) {
                if (w[r] == 0) continue;
                for (std::size_t c = 0; c < cols; ++c) {
                    const Scalar d = g * w[r] * (pred.at(r, c) - target.at(r, c));
                    if (dp) dp[r * cols + c] += d;
                    if (dt) dt[r * cols + c] -= d;
                }
            }
        });
    }
    return res;
}

Tensor& sum(Tape& tape, const Tensor& x) {
    const bool grad = any_grad(tape, {&x});
    Scalar acc = 0;
    for (auto v : x.values()) acc += v;
    Tensor& res = emit(tape, Tensor::scalar(acc), grad);
    if (grad) {
        tape.on_backward([&res, &x] {
            if (!res.has_grad()) return;
            const Scalar g = res.grad()[0];
            Scalar* dx = x.grad_buffer();
            for (std::size_t i = 0; i < x.numel(); ++i) dx[i] += g;
        });
    }
    return res;
}

Tensor& weighted_sum(Tape& tape, const std::vector<std::pair<const Tensor*, Scalar>>& terms) {
    if (terms.empty()) throw DimensionError("weighted_sum: no terms");
    bool grad = false;
    Scalar acc = 0;
    for (const auto& [t, w] : terms) {
        if (t->numel() != 1) throw DimensionError("weighted_sum expects scalar terms");
        grad = any_grad(tape, {t}) || grad;
        acc += w * t->item();
    }
    Tensor& res = emit(tape, Tensor::scalar(acc), grad);
    if (grad) {
        tape.on_backward([&res, terms] {
            if (!res.has_grad()) return;
            const Scalar g = res.grad()[0];
            for (const auto& [t, w] : terms)
                if (t->requires_grad()) t->grad_buffer()[0] += g * w;
        });
    }
    return res;
}

Tensor& weighted_sq_diff(Tape& tape, const Tensor& theta, const Tensor& anchor, const Tensor& weight) {
    require_same_shape(theta, anchor, "weighted_sq_diff");
    require_same_shape(theta, weight, "weighted_sq_diff");
    const bool grad = any_grad(tape, {&theta});
    Scalar acc = 0;
    for (std::size_t i = 0; i < theta.numel(); ++i) {
        const Scalar d = theta[i] - anchor[i];
        acc += weight[i] * d * d;
    }
    Tensor& res = emit(tape, Tensor::scalar(acc), grad);
    if (grad) {
        tape.on_backward([&res, &theta, &anchor, &weight] {
            if (!res.has_grad()) return;
            const Scalar g = res.grad()[0];
            Scalar* dt = theta.grad_buffer();
            for (std::size_t i = 0; i < theta.numel(); ++i) dt[i] += g * Scalar{2} * weight[i] * (theta[i] - anchor[i]);
        });
    }
    return res;
}

Scalar cosine_similarity(std::span<const Scalar> u, std::span<const Scalar> v) {
    if (u.size() != v.size()) throw DimensionError("cosine_similarity: length mismatch");
    Scalar dot = 0, nu = 0, nv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0 || nv == 0) return 0;
    const Scalar c = dot / (std::sqrt(nu) * std::sqrt(nv));
    return std::clamp(c, Scalar{-1}, Scalar{1});
}

}  // namespace contdt::ops
