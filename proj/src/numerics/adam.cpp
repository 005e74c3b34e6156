#include "contdt/numerics/adam.hpp"

#include <cmath>

#include "contdt/errors.hpp"

namespace contdt {

void Adam::step(const ParamList& params) {
    for (const auto& p : params) {
        if (!p.tensor->has_grad()) continue;
        if (p.tensor->frozen()) throw FrozenParameterError("optimizer asked to update frozen parameter " + p.name);
        for (Scalar g : p.tensor->grad()) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p.name);
        }
    }
    ++steps_;
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    const auto lr = static_cast<Scalar>(config_.learning_rate);
    const auto wd = static_cast<Scalar>(config_.weight_decay);
    const auto eps = static_cast<Scalar>(config_.eps);
    for (const auto& p : params) {
        Tensor& t = *p.tensor;
        if (!t.has_grad()) continue;
        auto& st = moments_[p.name];
        if (st.m.size() != t.numel()) {
            st.m.assign(t.numel(), Scalar{0});
            st.v.assign(t.numel(), Scalar{0});
            st.steps = 0;
        }
        ++st.steps;
        const auto c1 = static_cast<Scalar>(1.0 - std::pow(config_.beta1, static_cast<double>(st.steps)));
        const auto c2 = static_cast<Scalar>(1.0 - std::pow(config_.beta2, static_cast<double>(st.steps)));
        auto g = t.grad();
        auto w = t.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            st.m[i] = b1 * st.m[i] + (Scalar{1} - b1) * g[i];
            st.v[i] = b2 * st.v[i] + (Scalar{1} - b2) * g[i] * g[i];
            const Scalar mhat = st.m[i] / c1;
            const Scalar vhat = st.v[i] / c2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * w[i]);
        }
    }
    clear_grads(params);
}

void clear_grads(const ParamList& params) {
    for (const auto& p : params) p.tensor->clear_grad();
}

}  // namespace contdt
