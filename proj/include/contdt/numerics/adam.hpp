#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "contdt/numerics/tensor.hpp"

namespace contdt {

struct AdamConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;  // decoupled
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// A parameter as seen by optimisers and serialisers.
struct NamedParam {
    std::string name;
    Tensor* tensor;
};
using ParamList = std::vector<NamedParam>;

/// Adaptive-moment optimiser with decoupled weight decay.
///
/// Moments are keyed by parameter name so that models can be copied or
/// reassembled between steps. Only tensors carrying a gradient are
/// touched; bias correction uses each parameter's own update count.
class Adam {
public:
    struct Moments {
        std::vector<Scalar> m;
        std::vector<Scalar> v;
        std::int64_t steps = 0;
    };

    explicit Adam(AdamConfig config = {}) : config_(config) {}

    [[nodiscard]] const AdamConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::int64_t step_count() const noexcept { return steps_; }
    [[nodiscard]] const std::map<std::string, Moments>& moments() const noexcept { return moments_; }

    /// Applies one update to every parameter with a gradient, then clears
    /// all gradients. Throws NumericError on non-finite gradients (nothing
    /// is modified in that case) and FrozenParameterError for frozen tensors
    /// that somehow carry one.
    void step(const ParamList& params);

private:
    AdamConfig config_;
    std::int64_t steps_ = 0;
    std::map<std::string, Moments> moments_;
};

/// Drops the gradient buffer of every listed parameter.
void clear_grads(const ParamList& params);

}  // namespace contdt
