#include "contdt/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "contdt/errors.hpp"

namespace contdt {

GradCheckResult finite_diff_check(const LossFn& loss, const std::vector<Coordinate>& coords, double h,
                                  double zero_tol) {
    GradCheckResult out;
    for (const auto& c : coords) c.tensor->clear_grad();
    {
        Tape tape;
        const Tensor& l = loss(tape);
        tape.backward(l);
    }
    for (const auto& c : coords) {
        const auto g = c.tensor->grad();
        out.analytic.push_back(g.empty() ? 0.0 : static_cast<double>(g[c.index]));
    }
    for (const auto& c : coords) c.tensor->clear_grad();

    auto eval = [&] {
        Tape tape(false);
        return static_cast<double>(loss(tape).item());
    };
    const auto step = static_cast<Scalar>(h);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        Scalar& x = (*coords[i].tensor)[coords[i].index];
        const Scalar saved = x;
        x = saved + step;
        const double up = eval();
        x = saved - step;
        const double down = eval();
        x = saved;
        // The perturbation actually applied after rounding.
        const double applied = static_cast<double>(saved + step) - static_cast<double>(saved - step);
        out.numeric.push_back((up - down) / applied);
    }
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double a = out.analytic[i], n = out.numeric[i];
        const double denom = std::max(std::abs(a), std::abs(n));
        const double err = denom < zero_tol ? 0.0 : std::abs(a - n) / denom;
        if (err > out.max_rel_error) {
            out.max_rel_error = err;
            out.worst_index = i;
        }
    }
    return out;
}

GradCheckResult finite_diff_check(const std::function<const Tensor&(Tape&, const Tensor&)>& f, Tensor x, double h,
                                  double zero_tol) {
    x.set_requires_grad(true);
    std::vector<Coordinate> coords;
    for (std::size_t i = 0; i < x.numel(); ++i) coords.push_back({&x, i});
    return finite_diff_check([&](Tape& tape) -> const Tensor& { return f(tape, x); }, coords, h, zero_tol);
}

}  // namespace contdt
