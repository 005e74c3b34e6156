#pragma once

// Small models, data and independent oracles shared by the unit and
// acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <utility>
#include <vector>

#include "contdt/dt/model.hpp"
#include "contdt/dt/train.hpp"
#include "contdt/metrics/metrics.hpp"
#include "contdt/mhdt/mhdt.hpp"
#include "contdt/numerics/tape.hpp"
#include "contdt/tasks/dataset.hpp"

namespace contdt::testing {

inline bool bit_equal(std::span<const Scalar> a, std::span<const Scalar> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(Scalar)) == 0;
}

inline DTConfig small_config(int k = 4, int layers = 2) {
    DTConfig cfg;
    cfg.context_len = k;
    cfg.n_layers = layers;
    cfg.n_heads = 1;
    cfg.embed_dim = 8;
    cfg.mlp_dim = 6;
    cfg.max_timestep = 30;
    return cfg;
}

inline OfflineDataset small_dataset(double heading, std::uint64_t seed, int n_traj = 20, int horizon = 12) {
    TaskSpec t;
    t.parameter = heading;
    t.horizon = horizon;
    return generate_dataset(t, Quality::Middle, n_traj, seed);
}

/// Name -> values snapshot of every tensor visited by `visit`.
template <class Visit>
std::vector<std::vector<Scalar>> collect_values(Visit&& visit) {
    std::vector<std::vector<Scalar>> out;
    visit([&](const std::string&, const Tensor& t) { out.emplace_back(t.values().begin(), t.values().end()); });
    return out;
}

inline std::vector<std::vector<Scalar>> head_snapshot(const HeadParams& h) {
    return collect_values([&](auto&& f) { visit_head(h, f); });
}

inline std::vector<std::vector<Scalar>> trunk_snapshot(const Trunk& t) {
    return collect_values([&](auto&& f) { visit_trunk(t, f); });
}

/// Mean over valid state positions of the cosine between hidden states of
/// `a` and `b`, accumulated in double straight from the definition.
inline double mean_hidden_cosine(PolicyView a, PolicyView b, std::span<const TrajectoryWindow> batch) {
    Tape ta(false), tb(false);
    const Tensor& ha = forward(ta, a, batch).hidden;
    const Tensor& hb = forward(tb, b, batch).hidden;
    const std::size_t h = a.config->embed_dim, k = a.config->context_len;
    double total = 0;
    int count = 0;
    for (std::size_t w = 0; w < batch.size(); ++w) {
        for (int t = 0; t < batch[w].valid_len; ++t) {
            const std::size_t row = w * k + static_cast<std::size_t>(t);
            double dot = 0, na = 0, nb = 0;
            for (std::size_t i = 0; i < h; ++i) {
                const double x = ha.values()[row * h + i], y = hb.values()[row * h + i];
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            total += dot / std::sqrt(na * nb);
            ++count;
        }
    }
    return total / count;
}

/// Previous tasks sorted by (similarity, index), first k kept.
inline std::vector<int> brute_force_select(const MultiHeadDT& pi, PolicyView teacher,
                                           std::span<const TrajectoryWindow> batch, int n, int k) {
    std::vector<std::pair<double, int>> scored;
    for (int j = 0; j < n; ++j) scored.emplace_back(mean_hidden_cosine(pi.view(j), teacher, batch), j);
    std::sort(scored.begin(), scored.end());
    std::vector<int> out;
    for (int i = 0; i < std::min(k, n); ++i) out.push_back(scored[static_cast<std::size_t>(i)].second);
    return out;
}

/// Random window with `valid_len` filled steps and zero padding after them.
inline TrajectoryWindow random_window(const DTConfig& cfg, Rng& rng, int valid_len) {
    auto w = TrajectoryWindow::zeros(cfg.context_len, cfg.state_dim, cfg.action_dim);
    w.valid_len = valid_len;
    const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_timestep - cfg.context_len)));
    for (int t = 0; t < valid_len; ++t) {
        w.rtg[t] = static_cast<Scalar>(rng.uniform(0, 100));
        w.timesteps[t] = start + t;
        for (int i = 0; i < cfg.state_dim; ++i) w.states[t * cfg.state_dim + i] = static_cast<Scalar>(rng.normal());
        for (int i = 0; i < cfg.action_dim; ++i)
            w.actions[t * cfg.action_dim + i] = static_cast<Scalar>(rng.uniform(-1, 1));
    }
    return w;
}

/// Jitters every parameter so that no weight sits at its tidy initial value.
inline void spread_weights(DTModel& m, Rng& rng) {
    for (auto& p : m.parameters())
        for (auto& v : p.tensor->values()) v += static_cast<Scalar>(rng.normal(0, 0.3));
}

/// Perturbs a random token and everything after it; predictions and hidden
/// states of earlier steps must not change in a single bit. Returns the
/// number of failing trials.
inline int causality_failures(const DTModel& m, Rng& rng, int trials) {
    const DTConfig& cfg = m.config;
    const int k = cfg.context_len;
    int failures = 0;
    for (int trial = 0; trial < trials; ++trial) {
        auto w = random_window(cfg, rng, k);
        auto p = w;
        // Tokens run (rtg, state, action) per step.
        const int p0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(3 * k)));
        for (int tok = p0; tok < 3 * k; ++tok) {
            const int t = tok / 3;
            switch (tok % 3) {
                case 0: p.rtg[t] += static_cast<Scalar>(rng.normal(0, 10)); break;
                case 1:
                    for (int i = 0; i < cfg.state_dim; ++i) p.states[t * cfg.state_dim + i] += static_cast<Scalar>(rng.normal());
                    break;
                default:
                    for (int i = 0; i < cfg.action_dim; ++i)
                        p.actions[t * cfg.action_dim + i] += static_cast<Scalar>(rng.normal());
            }
        }
        const std::vector<TrajectoryWindow> a{w}, b{p};
        Tape tape(false);
        const auto oa = forward(tape, m.view(), a);
        const auto ob = forward(tape, m.view(), b);
        // Step t is read at its state token 3t + 1, so steps with 3t + 1 < p0 are safe.
        const auto safe = static_cast<std::size_t>((p0 + 1) / 3);
        const std::size_t ad = cfg.action_dim, h = cfg.embed_dim;
        const bool same = bit_equal(oa.pred_actions.values().subspan(0, safe * ad),
                                    ob.pred_actions.values().subspan(0, safe * ad)) &&
                          bit_equal(oa.hidden.values().subspan(0, safe * h), ob.hidden.values().subspan(0, safe * h));
        failures += !same;
    }
    return failures;
}

/// Fills the padding of random windows with noise; the loss and the valid
/// predictions must not change in a single bit. Returns failing trials.
inline int padding_failures(const DTModel& m, Rng& rng, int trials) {
    const DTConfig& cfg = m.config;
    const int k = cfg.context_len;
    int failures = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const int valid = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 1)));
        auto w = random_window(cfg, rng, valid);
        auto noisy = w;
        for (int t = valid; t < k; ++t) {
            noisy.rtg[t] = static_cast<Scalar>(rng.normal(0, 50));
            noisy.timesteps[t] = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_timestep)));
            for (int i = 0; i < cfg.state_dim; ++i) noisy.states[t * cfg.state_dim + i] = static_cast<Scalar>(rng.normal());
            for (int i = 0; i < cfg.action_dim; ++i) noisy.actions[t * cfg.action_dim + i] = static_cast<Scalar>(rng.normal());
        }
        const std::vector<TrajectoryWindow> a{w}, b{noisy};
        Tape tape(false);
        const double la = prediction_loss(tape, m.view(), a).item();
        const double lb = prediction_loss(tape, m.view(), b).item();
        const auto oa = forward(tape, m.view(), a);
        const auto ob = forward(tape, m.view(), b);
        const auto n = static_cast<std::size_t>(valid) * cfg.action_dim;
        const bool same = std::memcmp(&la, &lb, sizeof la) == 0 &&
                          bit_equal(oa.pred_actions.values().subspan(0, n), ob.pred_actions.values().subspan(0, n));
        failures += !same;
    }
    return failures;
}

/// A metric evaluated on a small matrix next to its value worked out by hand.
struct HandMetric {
    const char* what;
    double got;
    double expected;
};

inline PerformanceMatrix matrix_of(const std::vector<std::vector<double>>& rows) {
    PerformanceMatrix m(static_cast<int>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) m.set_row(static_cast<int>(i), rows[i]);
    return m;
}

inline std::vector<HandMetric> hand_metric_cases() {
    std::vector<HandMetric> out;
    const auto two = matrix_of({{1, 0}, {0.5, 2}});
    out.push_back({"PER [[1,0],[0.5,2]]", per(two), 1.25});
    out.push_back({"BWT [[1,0],[0.5,2]]", bwt(two), 0.5});
    out.push_back({"BWT [[1,7],[0,4]]", bwt(matrix_of({{1, 7}, {0, 4}})), 1.0});

    auto transfer = matrix_of({{4, 3}, {2, 6}});
    transfer.b_bar = {0.0, 1.0};
    out.push_back({"FWT a[0][1]=3 b=1", fwt(transfer), 2.0});

    auto single = matrix_of({{3}});
    single.teacher = {5.0};
    out.push_back({"DG t=5 a=3", dg(single), 2.0});
    out.push_back({"PER N=1", per(single), 3.0});

    auto three = matrix_of({{10, 2, 1}, {8, 12, 3}, {7, 9, 15}});
    three.b_bar = {0.0, 1.0, 2.0};
    three.teacher = {11.0, 13.0, 14.0};
    out.push_back({"PER 3x3", per(three), 31.0 / 3.0});
    out.push_back({"BWT 3x3", bwt(three), 3.0});
    out.push_back({"FWT 3x3", fwt(three), 1.0});
    out.push_back({"DG 3x3", dg(three), 1.0 / 3.0});

    auto kept = matrix_of({{5, 1, 1}, {5, 6, 1}, {5, 6, 7}});
    kept.teacher = {5.0, 6.0, 7.0};
    out.push_back({"BWT without forgetting", bwt(kept), 0.0});
    out.push_back({"DG with perfect distillation", dg(kept), 0.0});
    out.push_back({"PER of a constant matrix", per(matrix_of({{2.5, 2.5}, {2.5, 2.5}})), 2.5});
    return out;
}

}  // namespace contdt::testing
