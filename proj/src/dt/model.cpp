#include "contdt/dt/model.hpp"

#include <cmath>

#include "contdt/errors.hpp"
#include "contdt/numerics/ops.hpp"

namespace contdt {

namespace {

constexpr double kInitStd = 0.02;

Tensor gaussian(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<Scalar>(rng.normal(0.0, kInitStd));
    t.set_requires_grad(true);
    return t;
}

Tensor filled(Shape shape, Scalar value) {
    Tensor t(std::move(shape), value);
    t.set_requires_grad(true);
    return t;
}

}  // namespace

TrajectoryWindow TrajectoryWindow::zeros(int context_len, int state_dim, int action_dim) {
    TrajectoryWindow w;
    const auto k = static_cast<std::size_t>(context_len);
    w.rtg.assign(k, 0);
    w.states.assign(k * state_dim, 0);
    w.actions.assign(k * action_dim, 0);
    w.timesteps.assign(k, 0);
    return w;
}

HeadParams init_head(const DTConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t h = cfg.embed_dim, s = cfg.state_dim, a = cfg.action_dim;
    HeadParams p;
    p.rtg_weight = gaussian({h, 1}, rng);
    p.rtg_bias = filled({h}, 0);
    p.state_weight = gaussian({h, s}, rng);
    p.state_bias = filled({h}, 0);
    p.action_weight = gaussian({h, a}, rng);
    p.action_bias = filled({h}, 0);
    p.timestep_table = gaussian({static_cast<std::size_t>(cfg.max_timestep), h}, rng);
    p.ln_gain = filled({h}, 1);
    p.ln_bias = filled({h}, 0);
    p.out_weight = gaussian({a, h}, rng);
    p.out_bias = filled({a}, 0);
    return p;
}

Trunk init_trunk(const DTConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t h = cfg.embed_dim, d = cfg.mlp_dim;
    Trunk trunk;
    for (int i = 0; i < cfg.n_layers; ++i) {
        BlockParams b;
        b.wq = gaussian({h, h}, rng);
        b.wk = gaussian({h, h}, rng);
        b.wv = gaussian({h, h}, rng);
        b.wo = gaussian({h, h}, rng);
        b.ln1_gain = filled({h}, 1);
        b.ln1_bias = filled({h}, 0);
        b.w0 = gaussian({d, h}, rng);
        b.b0 = filled({d}, 0);
        b.w1 = gaussian({h, d}, rng);
        b.b1 = filled({h}, 0);
        b.ln2_gain = filled({h}, 1);
        b.ln2_bias = filled({h}, 0);
        trunk.blocks.push_back(std::move(b));
    }
    return trunk;
}

ParamList head_parameters(HeadParams& head, const std::string& prefix) {
    ParamList out;
    visit_head(head, [&](const std::string& n, Tensor& t) { out.push_back({prefix + n, &t}); });
    return out;
}

ParamList trunk_parameters(Trunk& trunk, const std::string& prefix) {
    ParamList out;
    visit_trunk(trunk, [&](const std::string& n, Tensor& t) { out.push_back({prefix + n, &t}); });
    return out;
}

DTModel DTModel::init(const DTConfig& cfg, Rng& rng) {
    Rng head_rng = rng.child("head");
    Rng trunk_rng = rng.child("trunk");
    return DTModel{cfg, init_head(cfg, head_rng), init_trunk(cfg, trunk_rng)};
}

ParamList DTModel::parameters() {
    ParamList out = head_parameters(head, "head.");
    for (auto& p : trunk_parameters(trunk, "trunk.")) out.push_back(std::move(p));
    return out;
}

const Tensor& embed_trajectory(Tape& tape, const DTConfig& cfg, const HeadParams& head,
                               std::span<const TrajectoryWindow> windows) {
    if (windows.empty()) throw DimensionError("embed_trajectory: empty batch");
    const std::size_t k = cfg.context_len, bsz = windows.size();
    const std::size_t s = cfg.state_dim, a = cfg.action_dim, rows = bsz * k;
    Tensor rtg({rows, 1}), states({rows, s}), actions({rows, a});
    std::vector<std::size_t> steps(rows);
    for (std::size_t b = 0; b < bsz; ++b) {
        const auto& w = windows[b];
        if (w.rtg.size() != k || w.states.size() != k * s || w.actions.size() != k * a || w.timesteps.size() != k)
            throw DimensionError("embed_trajectory: window does not match the configured context length");
        if (w.valid_len < 1 || w.valid_len > cfg.context_len)
            throw DimensionError("embed_trajectory: valid_len out of range");
        for (std::size_t t = 0; t < k; ++t) {
            const std::size_t r = b * k + t;
            rtg[r] = w.rtg[t] * cfg.rtg_scale;
            std::copy_n(w.states.begin() + t * s, s, states.data() + r * s);
            std::copy_n(w.actions.begin() + t * a, a, actions.data() + r * a);
            const int ts = w.timesteps[t];
            if (ts < 0 || ts >= cfg.max_timestep)
                throw ConfigError("timestep " + std::to_string(ts) + " outside embedding table of size " +
                                  std::to_string(cfg.max_timestep));
            steps[r] = static_cast<std::size_t>(ts);
        }
    }
    const Tensor& rtg_in = tape.hold(std::move(rtg));
    const Tensor& state_in = tape.hold(std::move(states));
    const Tensor& action_in = tape.hold(std::move(actions));
    const Tensor& time = ops::take_rows(tape, head.timestep_table, std::move(steps));

    const Tensor& er = ops::add(tape, ops::linear(tape, rtg_in, head.rtg_weight, &head.rtg_bias), time);
    const Tensor& es = ops::add(tape, ops::linear(tape, state_in, head.state_weight, &head.state_bias), time);
    const Tensor& ea = ops::add(tape, ops::linear(tape, action_in, head.action_weight, &head.action_bias), time);
    const Tensor& stacked = ops::concat_rows(tape, {&er, &es, &ea});

    std::vector<std::size_t> order(3 * rows);
    for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t t = 0; t < k; ++t)
            for (std::size_t m = 0; m < 3; ++m) order[b * 3 * k + 3 * t + m] = m * rows + b * k + t;
    const Tensor& tokens = ops::take_rows(tape, stacked, std::move(order));
    return ops::layernorm(tape, tokens, head.ln_gain, head.ln_bias);
}

namespace {

const Tensor& attention(Tape& tape, const Tensor& x, const BlockParams& block, const DTConfig& cfg,
                        std::size_t seq) {
    const Tensor& q = ops::linear(tape, x, block.wq, nullptr);
    const Tensor& k = ops::linear(tape, x, block.wk, nullptr);
    const Tensor& v = ops::linear(tape, x, block.wv, nullptr);
    const std::size_t h = cfg.embed_dim, nh = cfg.n_heads, hd = h / nh;
    const auto factor = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(hd)));
    const Tensor* mixed = nullptr;
    if (nh == 1) {
        const Tensor& p = ops::softmax_causal(tape, ops::block_matmul_bt(tape, q, k, seq, factor), seq);
        mixed = &ops::block_matmul(tape, p, v, seq);
    } else {
        std::vector<const Tensor*> heads;
        for (std::size_t i = 0; i < nh; ++i) {
            const Tensor& qi = ops::slice_cols(tape, q, i * hd, (i + 1) * hd);
            const Tensor& ki = ops::slice_cols(tape, k, i * hd, (i + 1) * hd);
            const Tensor& vi = ops::slice_cols(tape, v, i * hd, (i + 1) * hd);
            const Tensor& p = ops::softmax_causal(tape, ops::block_matmul_bt(tape, qi, ki, seq, factor), seq);
            heads.push_back(&ops::block_matmul(tape, p, vi, seq));
        }
        mixed = &ops::concat_cols(tape, heads);
    }
    return ops::linear(tape, *mixed, block.wo, nullptr);
}

}  // namespace

const Tensor& mlp_forward(Tape& tape, const Tensor& x, const BlockParams& block) {
    const Tensor* w0 = &block.w0;
    const Tensor* w1 = &block.w1;
    if (block.lora) {
        const auto& ad = *block.lora;
        w0 = &ops::add(tape, block.w0, ops::matmul(tape, ad.b0, ad.a0));
        w1 = &ops::add(tape, block.w1, ops::matmul(tape, ad.b1, ad.a1));
    }
    const Tensor& inner = ops::relu(tape, ops::linear(tape, x, *w0, &block.b0));
    return ops::linear(tape, inner, *w1, &block.b1);
}

ForwardOutput forward(Tape& tape, PolicyView policy, std::span<const TrajectoryWindow> windows) {
    const DTConfig& cfg = *policy.config;
    if (policy.trunk->blocks.size() != static_cast<std::size_t>(cfg.n_layers))
        throw ConfigError("trunk depth does not match config");
    const std::size_t k = cfg.context_len, seq = 3 * k, bsz = windows.size();

    const Tensor* x = &embed_trajectory(tape, cfg, *policy.head, windows);
    for (const auto& block : policy.trunk->blocks) {
        const Tensor& attended = ops::layernorm(tape, ops::add(tape, *x, attention(tape, *x, block, cfg, seq)),
                                                block.ln1_gain, block.ln1_bias);
        x = &ops::layernorm(tape, ops::add(tape, attended, mlp_forward(tape, attended, block)), block.ln2_gain,
                            block.ln2_bias);
    }
    std::vector<std::size_t> state_rows(bsz * k);
    for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t t = 0; t < k; ++t) state_rows[b * k + t] = b * seq + 3 * t + 1;
    const Tensor& hidden = ops::take_rows(tape, *x, std::move(state_rows));
    const Tensor& raw = ops::linear(tape, hidden, policy.head->out_weight, &policy.head->out_bias);
    const Tensor& pred = ops::scale(tape, ops::tanh(tape, raw), cfg.action_bound);
    if (!pred.all_finite() || !hidden.all_finite()) throw NumericError("non-finite activations in DT forward");
    return {pred, hidden};
}

}  // namespace contdt
