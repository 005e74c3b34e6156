#pragma once

#include <span>
#include <vector>

#include "contdt/dt/model.hpp"
#include "contdt/numerics/adam.hpp"

namespace contdt {

/// Per-row loss weights for a batch: 1 on supervised positions, 0 on padding
/// (and, in last-only mode, on every valid position but the final one).
std::vector<Scalar> loss_row_weights(const DTConfig& cfg, std::span<const TrajectoryWindow> windows);

/// Dataset actions of the batch laid out like ForwardOutput::pred_actions.
Tensor target_actions(const DTConfig& cfg, std::span<const TrajectoryWindow> windows);

/// Action-prediction loss: mean squared error between predicted and dataset
/// actions over supervised positions.
const Tensor& prediction_loss(Tape& tape, PolicyView policy, std::span<const TrajectoryWindow> windows);
/// Same loss on an existing forward pass of the batch.
const Tensor& prediction_loss(Tape& tape, const ForwardOutput& out, const DTConfig& cfg,
                              std::span<const TrajectoryWindow> windows);

/// One optimiser step on the prediction loss. Returns the loss before the step.
double train_step_single(DTModel& model, std::span<const TrajectoryWindow> batch, Adam& opt);

}  // namespace contdt
