#include "contdt/tasks/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "contdt/errors.hpp"

namespace contdt {

std::vector<Scalar> suffix_sums(std::span<const Scalar> rewards) {
    std::vector<Scalar> out(rewards.size());
    Scalar acc = 0;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        acc = rewards[i] + acc;
        out[i] = acc;
    }
    return out;
}

std::size_t OfflineDataset::transitions() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.rewards.size();
    return n;
}

double OfflineDataset::mean_return() const {
    if (trajectories.empty()) return 0.0;
    double s = 0;
    for (const auto& t : trajectories) s += t.episode_return;
    return s / static_cast<double>(trajectories.size());
}

Scalar OfflineDataset::max_return() const {
    if (trajectories.empty()) throw ConfigError("max_return of an empty dataset");
    Scalar best = trajectories.front().episode_return;
    for (const auto& t : trajectories) best = std::max(best, t.episode_return);
    return best;
}

Trajectory simulate_episode(const TaskSpec& task, Quality quality, Rng& rng, const BehaviorNoise& noise) {
    PointMassEnv env(task);
    Trajectory traj;
    std::vector<Scalar> state = env.reset(rng);
    traj.states.insert(traj.states.end(), state.begin(), state.end());
    for (int t = 0; t < task.horizon; ++t) {
        const auto action = scripted_policy(state, task, quality, rng, noise);
        Transition tr = env.step(state, action);
        traj.actions.insert(traj.actions.end(), action.begin(), action.end());
        traj.rewards.push_back(tr.reward);
        state = std::move(tr.next_state);
        traj.states.insert(traj.states.end(), state.begin(), state.end());
    }
    traj.returns_to_go = suffix_sums(traj.rewards);
    traj.episode_return = traj.returns_to_go.empty() ? Scalar{0} : traj.returns_to_go.front();
    return traj;
}

OfflineDataset generate_dataset(const TaskSpec& task, Quality quality, int n_traj, std::uint64_t seed,
                                const BehaviorNoise& noise) {
    if (n_traj < 1) throw ConfigError("generate_dataset: n_traj must be >= 1");
    if (task.horizon < 1) throw ConfigError("generate_dataset: horizon must be >= 1");
    OfflineDataset ds{task, quality, seed, {}};
    Rng root(seed);
    for (int i = 0; i < n_traj; ++i) {
        Rng episode_rng = root.child(static_cast<std::uint64_t>(i));
        ds.trajectories.push_back(simulate_episode(task, quality, episode_rng, noise));
    }
    return ds;
}

std::size_t ReplayBuffer::transitions() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.rewards.size();
    return n;
}

ReplayBuffer build_replay_buffer(const OfflineDataset& dataset, std::size_t capacity, Rng& rng, int task_index) {
    if (dataset.trajectories.empty()) throw ConfigError("build_replay_buffer: empty dataset");
    std::size_t shortest = dataset.trajectories.front().rewards.size();
    for (const auto& t : dataset.trajectories) shortest = std::min(shortest, t.rewards.size());
    if (capacity < shortest)
        throw ConfigError("replay capacity " + std::to_string(capacity) + " is smaller than one trajectory (" +
                          std::to_string(shortest) + " transitions)");
    std::vector<std::size_t> order(dataset.trajectories.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    ReplayBuffer buf;
    buf.task_index = task_index;
    buf.capacity = capacity;
    std::size_t used = 0;
    for (std::size_t idx : order) {
        const std::size_t len = dataset.trajectories[idx].rewards.size();
        if (used + len > capacity) break;
        used += len;
        buf.source_indices.push_back(idx);
        buf.trajectories.push_back(dataset.trajectories[idx]);
    }
    return buf;
}

TrajectoryWindow make_window(const Trajectory& traj, int end, const DTConfig& cfg) {
    if (end < 0 || end >= traj.length()) throw DimensionError("make_window: end step out of range");
    const int k = cfg.context_len, s = cfg.state_dim, a = cfg.action_dim;
    auto w = TrajectoryWindow::zeros(k, s, a);
    const int start = std::max(0, end + 1 - k);
    w.valid_len = end + 1 - start;
    for (int i = 0; i < w.valid_len; ++i) {
        const int t = start + i;
        w.rtg[i] = traj.returns_to_go[t];
        w.timesteps[i] = t;
        std::copy_n(traj.states.begin() + t * s, s, w.states.begin() + i * s);
        std::copy_n(traj.actions.begin() + t * a, a, w.actions.begin() + i * a);
    }
    return w;
}

std::vector<TrajectoryWindow> sample_windows(std::span<const Trajectory> source, std::size_t batch,
                                             const DTConfig& cfg, Rng& rng) {
    if (source.empty()) throw ConfigError("sample_windows: empty source");
    std::vector<std::size_t> offsets(source.size() + 1, 0);
    for (std::size_t i = 0; i < source.size(); ++i) offsets[i + 1] = offsets[i] + source[i].rewards.size();
    const std::size_t total = offsets.back();
    if (total == 0) throw ConfigError("sample_windows: source has no transitions");
    std::vector<TrajectoryWindow> out;
    out.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t u = rng.below(total);
        const auto it = std::upper_bound(offsets.begin(), offsets.end(), u);
        const auto traj = static_cast<std::size_t>(it - offsets.begin()) - 1;
        out.push_back(make_window(source[traj], static_cast<int>(u - offsets[traj]), cfg));
    }
    return out;
}

}  // namespace contdt
