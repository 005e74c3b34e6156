#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "contdt/numerics/tape.hpp"
#include "contdt/numerics/tensor.hpp"

namespace contdt {

/// One scalar coordinate of some tensor.
struct Coordinate {
    Tensor* tensor;
    std::size_t index;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

/// Builds a scalar loss on the given tape from tensors the caller owns.
using LossFn = std::function<const Tensor&(Tape&)>;

/// Compares reverse-mode gradients with central differences
/// (f(x+h) - f(x-h)) / 2h at each coordinate. Relative error per coordinate
/// is |a - n| / max(|a|, |n|); coordinates where both are below `zero_tol`
/// count as agreeing. Gradients already present on the coordinates'
/// tensors are discarded.
GradCheckResult finite_diff_check(const LossFn& loss, const std::vector<Coordinate>& coords, double h = 1e-3,
                                  double zero_tol = 1e-9);

/// Convenience form: f maps x to a scalar; every element of x is checked.
GradCheckResult finite_diff_check(const std::function<const Tensor&(Tape&, const Tensor&)>& f, Tensor x,
                                  double h = 1e-3, double zero_tol = 1e-9);

}  // namespace contdt
