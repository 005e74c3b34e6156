#pragma once

#include <vector>

#include "contdt/numerics/tensor.hpp"

namespace contdt {

/// Up to K consecutive steps of one episode: the DT input.
///
/// Valid steps occupy positions [0, valid_len); everything after is zero
/// padding. Because padding only ever follows real steps, causal attention
/// alone keeps it out of every valid prediction.
struct TrajectoryWindow {
    std::vector<Scalar> rtg;      // K
    std::vector<Scalar> states;   // K * state_dim
    std::vector<Scalar> actions;  // K * action_dim
    std::vector<int> timesteps;   // K
    int valid_len = 0;

    static TrajectoryWindow zeros(int context_len, int state_dim, int action_dim);
};

}  // namespace contdt
