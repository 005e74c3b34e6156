#pragma once

#include <deque>
#include <functional>
#include <unordered_set>
#include <vector>

#include "contdt/numerics/tensor.hpp"

namespace contdt {

/// Reverse-mode recording of one forward pass.
///
/// Intermediates are owned by the tape (stable addresses); parameters are
/// referenced, and receive their gradients by accumulation. A tape built
/// with recording off evaluates forward only: no closures are kept and no
/// output requires a gradient.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    [[nodiscard]] bool recording() const noexcept { return recording_; }

    /// Takes ownership of an intermediate and returns a stable reference.
    Tensor& hold(Tensor t);

    /// Registers an op input. Inputs not owned by the tape are leaves.
    void track(const Tensor& input);

    void on_backward(std::function<void()> rule);

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse
    /// order. Leaf gradients accumulate across calls: the contribution of
    /// one pass is computed in isolation and then added, so a second call
    /// on the same tape exactly doubles them.
    void backward(const Tensor& loss);

    [[nodiscard]] std::size_t recorded_ops() const noexcept { return rules_.size(); }

private:
    bool recording_;
    std::deque<Tensor> held_;
    std::unordered_set<const Tensor*> owned_;
    std::vector<const Tensor*> leaves_;
    std::unordered_set<const Tensor*> leaf_set_;
    std::vector<std::function<void()>> rules_;
};

}  // namespace contdt
