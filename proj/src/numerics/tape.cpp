#include "contdt/numerics/tape.hpp"

#include "contdt/errors.hpp"

namespace contdt {

Tensor& Tape::hold(Tensor t) {
    Tensor& ref = held_.emplace_back(std::move(t));
    if (recording_) owned_.insert(&ref);
    return ref;
}

void Tape::track(const Tensor& input) {
    if (!recording_ || !input.requires_grad() || owned_.contains(&input)) return;
    if (leaf_set_.insert(&input).second) leaves_.push_back(&input);
}

void Tape::on_backward(std::function<void()> rule) {
    if (recording_) rules_.push_back(std::move(rule));
}

void Tape::backward(const Tensor& loss) {
    if (!recording_) throw Error("backward on a non-recording tape");
    if (loss.numel() != 1) throw DimensionError("backward needs a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    std::vector<std::vector<Scalar>> prior(leaves_.size());
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
        if (leaves_[i]->has_grad()) {
            auto g = leaves_[i]->grad();
            prior[i].assign(g.begin(), g.end());
            leaves_[i]->clear_grad();
        }
    }
    for (auto& t : held_) t.clear_grad();
    loss.grad_buffer()[0] = Scalar{1};
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
        if (!prior[i].empty()) leaves_[i]->accumulate_grad(prior[i]);
    }
}

}  // namespace contdt
