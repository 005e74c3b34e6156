#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "contdt/dt/config.hpp"
#include "contdt/dt/window.hpp"
#include "contdt/numerics/adam.hpp"
#include "contdt/numerics/rng.hpp"
#include "contdt/numerics/tape.hpp"

namespace contdt {

/// Task-facing parameters: modality embeddings, timestep table and
/// embedding layernorm in front of the trunk, the action regressor behind it.
struct HeadParams {
    Tensor rtg_weight, rtg_bias;        // [h x 1], [h]
    Tensor state_weight, state_bias;    // [h x state_dim], [h]
    Tensor action_weight, action_bias;  // [h x action_dim], [h]
    Tensor timestep_table;              // [max_timestep x h]
    Tensor ln_gain, ln_bias;            // [h]
    Tensor out_weight, out_bias;        // [action_dim x h], [action_dim]
};

/// Low-rank update of one block MLP: W0 + B0 A0 and W1 + B1 A1.
struct LoRAAdapter {
    Tensor a0;  // [r x h]
    Tensor b0;  // [d x r]
    Tensor a1;  // [r x d]
    Tensor b1;  // [h x r]
};

struct BlockParams {
    Tensor wq, wk, wv, wo;       // [h x h]
    Tensor ln1_gain, ln1_bias;   // after attention
    Tensor w0, b0;               // [d x h], [d]
    Tensor w1, b1;               // [h x d], [h]
    Tensor ln2_gain, ln2_bias;   // after the MLP
    std::optional<LoRAAdapter> lora;
};

struct Trunk {
    std::vector<BlockParams> blocks;
};

HeadParams init_head(const DTConfig& cfg, Rng& rng);
Trunk init_trunk(const DTConfig& cfg, Rng& rng);

/// Calls f(name, tensor) for every head tensor in a fixed order.
template <class H, class F>
void visit_head(H& head, F&& f) {
    f("embed_rtg.weight", head.rtg_weight);
    f("embed_rtg.bias", head.rtg_bias);
    f("embed_state.weight", head.state_weight);
    f("embed_state.bias", head.state_bias);
    f("embed_action.weight", head.action_weight);
    f("embed_action.bias", head.action_bias);
    f("embed_timestep", head.timestep_table);
    f("embed_ln.gain", head.ln_gain);
    f("embed_ln.bias", head.ln_bias);
    f("predict_action.weight", head.out_weight);
    f("predict_action.bias", head.out_bias);
}

/// Block tensors outside the MLP: attention projections and both layernorms.
template <class B, class F>
void visit_block_non_mlp(B& block, F&& f) {
    f("attn.wq", block.wq);
    f("attn.wk", block.wk);
    f("attn.wv", block.wv);
    f("attn.wo", block.wo);
    f("ln1.gain", block.ln1_gain);
    f("ln1.bias", block.ln1_bias);
    f("ln2.gain", block.ln2_gain);
    f("ln2.bias", block.ln2_bias);
}

template <class B, class F>
void visit_block_mlp(B& block, F&& f) {
    f("mlp.w0", block.w0);
    f("mlp.b0", block.b0);
    f("mlp.w1", block.w1);
    f("mlp.b1", block.b1);
}

template <class A, class F>
void visit_adapter(A& adapter, F&& f) {
    f("lora.a0", adapter.a0);
    f("lora.b0", adapter.b0);
    f("lora.a1", adapter.a1);
    f("lora.b1", adapter.b1);
}

/// Every trunk tensor, adapters included, named "block<i>.<tensor>".
template <class T, class F>
void visit_trunk(T& trunk, F&& f) {
    for (std::size_t i = 0; i < trunk.blocks.size(); ++i) {
        auto& block = trunk.blocks[i];
        const std::string prefix = "block" + std::to_string(i) + ".";
        auto named = [&](const char* n, auto& t) { f(prefix + n, t); };
        visit_block_non_mlp(block, named);
        visit_block_mlp(block, named);
        if (block.lora) visit_adapter(*block.lora, named);
    }
}

ParamList head_parameters(HeadParams& head, const std::string& prefix);
ParamList trunk_parameters(Trunk& trunk, const std::string& prefix);

/// Read-only view of the parameters that make up one policy. A single-head
/// model, one head of a multi-head model, or a base model with swapped
/// adapters are all evaluated through the same view.
struct PolicyView {
    const DTConfig* config;
    const HeadParams* head;
    const Trunk* trunk;
};

/// Rows are (window, step) pairs in window-major order: row b*K + t.
struct ForwardOutput {
    const Tensor& pred_actions;  // [B*K x action_dim], squashed into +-action_bound
    const Tensor& hidden;        // [B*K x h], final block output at state tokens
};

/// Tokenises windows into [B*3K x h] rows ordered (rtg_t, s_t, a_t) per step,
/// each the modality embedding plus the timestep embedding, layer-normalised.
const Tensor& embed_trajectory(Tape& tape, const DTConfig& cfg, const HeadParams& head,
                               std::span<const TrajectoryWindow> windows);

/// One block MLP on token rows: (W1 + B1A1) relu((W0 + B0A0) x + b0) + b1,
/// written row-wise. Without adapters this is the plain two-layer MLP.
const Tensor& mlp_forward(Tape& tape, const Tensor& x, const BlockParams& block);

ForwardOutput forward(Tape& tape, PolicyView policy, std::span<const TrajectoryWindow> windows);

/// Single-task Decision Transformer.
struct DTModel {
    DTConfig config;
    HeadParams head;
    Trunk trunk;

    static DTModel init(const DTConfig& cfg, Rng& rng);

    [[nodiscard]] PolicyView view() const { return {&config, &head, &trunk}; }
    ParamList parameters();
};

}  // namespace contdt
