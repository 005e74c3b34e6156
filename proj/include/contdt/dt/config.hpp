#pragma once

#include <cstddef>

#include "contdt/numerics/tensor.hpp"

namespace contdt {

/// Which window positions supervise the action-prediction loss.
enum class LossPositions { All, Last };

/// Shape of a Decision Transformer.
struct DTConfig {
    int context_len = 20;  // K: steps per window, 3K tokens
    int n_layers = 3;
    int n_heads = 1;
    int embed_dim = 128;  // h
    int mlp_dim = 128;    // d
    int state_dim = 4;
    int action_dim = 2;
    int max_timestep = 50;  // rows of the timestep embedding table
    Scalar action_bound = 1;
    Scalar rtg_scale = Scalar(0.01);  // returns-to-go are multiplied by this before embedding
    LossPositions loss_positions = LossPositions::All;

    /// Throws ConfigError when a field is out of range.
    void validate() const;

    [[nodiscard]] std::size_t tokens_per_window() const { return 3 * static_cast<std::size_t>(context_len); }
};

/// Trainable parameters of a DT without adapters.
std::size_t parameter_count(const DTConfig& cfg);

}  // namespace contdt
