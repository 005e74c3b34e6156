#include "contdt/dt/rollout.hpp"

#include <algorithm>
#include <cmath>

#include "contdt/errors.hpp"

namespace contdt {

namespace {

struct EpisodeHistory {
    std::vector<std::vector<Scalar>> states;
    std::vector<std::vector<Scalar>> actions;
    std::vector<Scalar> rtg;
};

TrajectoryWindow latest_window(const DTConfig& cfg, const EpisodeHistory& ep, int t) {
    const int k = cfg.context_len;
    auto w = TrajectoryWindow::zeros(k, cfg.state_dim, cfg.action_dim);
    const int first = std::max(0, t + 1 - k);
    w.valid_len = t + 1 - first;
    for (int i = 0; i < w.valid_len; ++i) {
        const int step = first + i;
        w.rtg[i] = ep.rtg[step];
        w.timesteps[i] = step;
        std::copy(ep.states[step].begin(), ep.states[step].end(), w.states.begin() + i * cfg.state_dim);
        if (step < t)
            std::copy(ep.actions[step].begin(), ep.actions[step].end(), w.actions.begin() + i * cfg.action_dim);
    }
    return w;
}

}  // namespace

RolloutResult rollout(PolicyView policy, const Environment& env, Scalar target_return, int episodes, Rng& rng) {
    const DTConfig& cfg = *policy.config;
    if (env.horizon() < 1) throw ConfigError("rollout: environment horizon must be >= 1");
    if (episodes < 1) throw ConfigError("rollout: need at least one episode");
    if (env.state_dim() != cfg.state_dim || env.action_dim() != cfg.action_dim)
        throw ConfigError("rollout: environment and model dimensions differ");
    const auto n = static_cast<std::size_t>(episodes);
    const std::size_t adim = cfg.action_dim;

    std::vector<EpisodeHistory> hist(n);
    std::vector<std::vector<Scalar>> state(n);
    std::vector<Scalar> rtg(n, target_return);
    RolloutResult result;
    result.episode_returns.assign(n, 0.0);
    result.rtg_trace.assign(n, {});
    for (std::size_t e = 0; e < n; ++e) state[e] = env.reset(rng);

    std::vector<TrajectoryWindow> batch(n);
    for (int t = 0; t < env.horizon(); ++t) {
        for (std::size_t e = 0; e < n; ++e) {
            hist[e].states.push_back(state[e]);
            hist[e].rtg.push_back(rtg[e]);
            result.rtg_trace[e].push_back(rtg[e]);
            batch[e] = latest_window(cfg, hist[e], t);
        }
        Tape tape(false);
        const auto out = forward(tape, policy, batch);
        for (std::size_t e = 0; e < n; ++e) {
            const std::size_t row = e * cfg.context_len + batch[e].valid_len - 1;
            std::vector<Scalar> action(out.pred_actions.data() + row * adim,
                                       out.pred_actions.data() + (row + 1) * adim);
            Transition tr = env.step(state[e], action);
            if (!std::isfinite(tr.reward) ||
                !std::all_of(tr.next_state.begin(), tr.next_state.end(), [](Scalar v) { return std::isfinite(v); }))
                throw RolloutError("environment produced a non-finite transition at step " + std::to_string(t));
            hist[e].actions.push_back(std::move(action));
            result.episode_returns[e] += tr.reward;
            rtg[e] -= tr.reward;
            state[e] = std::move(tr.next_state);
        }
    }
    double total = 0;
    for (double r : result.episode_returns) total += r;
    result.mean_return = total / static_cast<double>(n);
    return result;
}

}  // namespace contdt
