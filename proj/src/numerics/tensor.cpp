#include "contdt/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "contdt/errors.hpp"

namespace contdt {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {
void check_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
}
}  // namespace

Tensor::Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    values_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<Scalar> values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape(shape_);
    if (shape_numel(shape_) != values_.size()) {
        throw DimensionError("shape " + shape_str(shape_) + " does not match " + std::to_string(values_.size()) +
                             " values");
    }
}

Tensor Tensor::scalar(Scalar value) { return Tensor({1}, std::vector<Scalar>{value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<Scalar> values) {
    return Tensor({rows, cols}, std::vector<Scalar>(values));
}

Tensor Tensor::vector(std::initializer_list<Scalar> values) {
    return Tensor({values.size()}, std::vector<Scalar>(values));
}

std::size_t Tensor::rows() const noexcept {
    if (shape_.empty()) return 0;
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
    return r;
}

std::size_t Tensor::cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

Scalar Tensor::item() const {
    if (values_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
    return values_[0];
}

void Tensor::set_frozen(bool on) {
    frozen_ = on;
    if (on) clear_grad();
}

std::span<const Scalar> Tensor::grad() const noexcept {
    if (!has_grad_) return {};
    return grad_;
}

Scalar* Tensor::grad_buffer() const {
    if (frozen_) throw FrozenParameterError("gradient write into frozen tensor " + shape_str(shape_));
    if (!has_grad_) {
        grad_.assign(values_.size(), Scalar{0});
        has_grad_ = true;
    }
    return grad_.data();
}

void Tensor::accumulate_grad(std::span<const Scalar> delta) const {
    if (delta.size() != values_.size()) throw DimensionError("gradient size mismatch");
    Scalar* g = grad_buffer();
    for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

void Tensor::clear_grad() const noexcept {
    has_grad_ = false;
    grad_.clear();
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](Scalar v) { return std::isfinite(v); });
}

bool Tensor::same_values(const Tensor& other) const noexcept {
    return shape_ == other.shape_ && values_ == other.values_;
}

}  // namespace contdt
