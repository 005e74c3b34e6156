#include "contdt/dt/train.hpp"

#include <cmath>

#include "contdt/errors.hpp"
#include "contdt/numerics/ops.hpp"

namespace contdt {

std::vector<Scalar> loss_row_weights(const DTConfig& cfg, std::span<const TrajectoryWindow> windows) {
    const std::size_t k = cfg.context_len;
    std::vector<Scalar> w(windows.size() * k, Scalar{0});
    for (std::size_t b = 0; b < windows.size(); ++b) {
        const auto valid = static_cast<std::size_t>(windows[b].valid_len);
        if (cfg.loss_positions == LossPositions::Last) {
            w[b * k + valid - 1] = 1;
        } else {
            for (std::size_t t = 0; t < valid; ++t) w[b * k + t] = 1;
        }
    }
    return w;
}

Tensor target_actions(const DTConfig& cfg, std::span<const TrajectoryWindow> windows) {
    const std::size_t k = cfg.context_len, a = cfg.action_dim;
    Tensor t({windows.size() * k, a});
    for (std::size_t b = 0; b < windows.size(); ++b)
        std::copy(windows[b].actions.begin(), windows[b].actions.end(), t.data() + b * k * a);
    return t;
}

const Tensor& prediction_loss(Tape& tape, PolicyView policy, std::span<const TrajectoryWindow> windows) {
    return prediction_loss(tape, forward(tape, policy, windows), *policy.config, windows);
}

const Tensor& prediction_loss(Tape& tape, const ForwardOutput& out, const DTConfig& cfg,
                              std::span<const TrajectoryWindow> windows) {
    const Tensor& target = tape.hold(target_actions(cfg, windows));
    return ops::masked_mse(tape, out.pred_actions, target, loss_row_weights(cfg, windows));
}

double train_step_single(DTModel& model, std::span<const TrajectoryWindow> batch, Adam& opt) {
    if (batch.empty()) throw ConfigError("train_step_single: empty batch");
    Tape tape;
    const Tensor& loss = prediction_loss(tape, model.view(), batch);
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericError("non-finite prediction loss");
    tape.backward(loss);
    opt.step(model.parameters());
    return value;
}

}  // namespace contdt
