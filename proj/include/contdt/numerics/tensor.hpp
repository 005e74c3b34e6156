#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#ifndef CONTDT_SCALAR
#define CONTDT_SCALAR float
#endif

namespace contdt {

/// Element type of every tensor. 32-bit in the shipped build; the verification
/// build recompiles the same sources with double to resolve finite differences.
using Scalar = CONTDT_SCALAR;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array with an optional gradient buffer.
///
/// A tensor is a value: copying it copies values and gradient. Graph
/// bookkeeping lives in Tape, not here. The gradient is a mutable
/// accumulator so that forward passes can take parameters by const
/// reference while backward still deposits gradients into them.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, Scalar fill = Scalar{0});
    Tensor(Shape shape, std::vector<Scalar> values);

    static Tensor scalar(Scalar value);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<Scalar> values);
    static Tensor vector(std::initializer_list<Scalar> values);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t numel() const noexcept { return values_.size(); }
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }
    /// Product of all leading dimensions; a rank-1 tensor is one row.
    [[nodiscard]] std::size_t rows() const noexcept;
    /// Last dimension.
    [[nodiscard]] std::size_t cols() const noexcept;

    [[nodiscard]] std::span<Scalar> values() noexcept { return values_; }
    [[nodiscard]] std::span<const Scalar> values() const noexcept { return values_; }
    [[nodiscard]] Scalar* data() noexcept { return values_.data(); }
    [[nodiscard]] const Scalar* data() const noexcept { return values_.data(); }

    Scalar& operator[](std::size_t i) { return values_[i]; }
    Scalar operator[](std::size_t i) const { return values_[i]; }
    Scalar& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    [[nodiscard]] Scalar at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
    /// Value of a single-element tensor.
    [[nodiscard]] Scalar item() const;

    [[nodiscard]] bool requires_grad() const noexcept { return requires_grad_ && !frozen_; }
    void set_requires_grad(bool on) noexcept { requires_grad_ = on; }
    [[nodiscard]] bool frozen() const noexcept { return frozen_; }
    /// Frozen tensors never carry gradients; any attempt to write one throws.
    void set_frozen(bool on);

    [[nodiscard]] bool has_grad() const noexcept { return has_grad_; }
    [[nodiscard]] std::span<const Scalar> grad() const noexcept;
    /// Zero-initialised gradient storage, allocated on first use.
    Scalar* grad_buffer() const;
    void accumulate_grad(std::span<const Scalar> delta) const;
    void clear_grad() const noexcept;

    [[nodiscard]] bool all_finite() const noexcept;
    /// Element-wise equality of shape and values (+0 and -0 compare equal).
    [[nodiscard]] bool same_values(const Tensor& other) const noexcept;

private:
    Shape shape_;
    std::vector<Scalar> values_;
    mutable std::vector<Scalar> grad_;
    mutable bool has_grad_ = false;
    bool requires_grad_ = false;
    bool frozen_ = false;
};

}  // namespace contdt
