#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "contdt/dt/config.hpp"
#include "contdt/dt/window.hpp"
#include "contdt/tasks/task.hpp"

namespace contdt {

/// One behaviour-policy episode.
struct Trajectory {
    std::vector<Scalar> states;         // (H+1) * kStateDim
    std::vector<Scalar> actions;        // H * kActionDim
    std::vector<Scalar> rewards;        // H
    std::vector<Scalar> returns_to_go;  // H, suffix sums of rewards
    Scalar episode_return = 0;

    [[nodiscard]] int length() const { return static_cast<int>(rewards.size()); }
};

/// rtg[t] = rewards[t] + rtg[t+1], accumulated from the last step backwards.
std::vector<Scalar> suffix_sums(std::span<const Scalar> rewards);

struct OfflineDataset {
    TaskSpec task;
    Quality quality = Quality::Expert;
    std::uint64_t seed = 0;
    std::vector<Trajectory> trajectories;

    [[nodiscard]] std::size_t transitions() const;
    [[nodiscard]] double mean_return() const;
    /// Best episode return; used as the evaluation target G*.
    [[nodiscard]] Scalar max_return() const;
};

Trajectory simulate_episode(const TaskSpec& task, Quality quality, Rng& rng, const BehaviorNoise& noise = {});

/// n_traj behaviour episodes; bit-identical for identical arguments.
OfflineDataset generate_dataset(const TaskSpec& task, Quality quality, int n_traj, std::uint64_t seed,
                                const BehaviorNoise& noise = {});

/// Whole-trajectory subset of a dataset kept for rehearsal.
struct ReplayBuffer {
    int task_index = 0;
    std::size_t capacity = 1000;  // transitions
    std::vector<std::size_t> source_indices;  // positions in the source dataset
    std::vector<Trajectory> trajectories;

    [[nodiscard]] std::size_t transitions() const;
};

/// Draws whole trajectories uniformly without replacement, stopping when the
/// next one would exceed `capacity` transitions.
ReplayBuffer build_replay_buffer(const OfflineDataset& dataset, std::size_t capacity, Rng& rng, int task_index);

/// Window of up to K steps ending at step `end` (inclusive).
TrajectoryWindow make_window(const Trajectory& traj, int end, const DTConfig& cfg);

/// Uniform over all (trajectory, end step) pairs.
std::vector<TrajectoryWindow> sample_windows(std::span<const Trajectory> source, std::size_t batch,
                                             const DTConfig& cfg, Rng& rng);

}  // namespace contdt
