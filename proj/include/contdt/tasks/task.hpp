#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "contdt/dt/rollout.hpp"
#include "contdt/numerics/rng.hpp"

namespace contdt {

/// Point-mass analogues of heading (Ant-Dir style) and target-speed
/// (Cheetah-Vel style) control.
enum class TaskFamily { Direction, Velocity };
enum class Quality { Expert, Middle };

std::string to_string(TaskFamily family);
std::string to_string(Quality quality);
TaskFamily parse_family(const std::string& text);
Quality parse_quality(const std::string& text);

inline constexpr int kStateDim = 4;   // x, y, vx, vy
inline constexpr int kActionDim = 2;  // ax, ay in [-1, 1]
inline constexpr Scalar kMaxSpeed = 2;
inline constexpr double kInitialJitter = 0.05;

/// One member of a task family. Every task shares the state and action
/// spaces, horizon and discount; only the reward parameter differs.
struct TaskSpec {
    TaskFamily family = TaskFamily::Direction;
    double parameter = 0.0;  // heading in radians, or target speed
    int horizon = 50;
    Scalar dt = Scalar(0.1);
    Scalar gamma = 1;
};

/// pos += vel*dt; vel += action*dt with speed clipped to kMaxSpeed. Reward
/// uses the new velocity: projection on the heading (Direction) or minus the
/// absolute speed error (Velocity).
Transition env_step(std::span<const Scalar> state, std::span<const Scalar> action, const TaskSpec& task);

class PointMassEnv final : public Environment {
public:
    explicit PointMassEnv(TaskSpec task) : task_(task) {}
    [[nodiscard]] const TaskSpec& task() const noexcept { return task_; }
    [[nodiscard]] int horizon() const override { return task_.horizon; }
    [[nodiscard]] int state_dim() const override { return kStateDim; }
    [[nodiscard]] int action_dim() const override { return kActionDim; }
    /// Origin at rest plus N(0, kInitialJitter^2) on every coordinate.
    std::vector<Scalar> reset(Rng& rng) const override;
    [[nodiscard]] Transition step(std::span<const Scalar> state, std::span<const Scalar> action) const override {
        return env_step(state, action, task_);
    }

private:
    TaskSpec task_;
};

/// Direction: headings 2*pi*i/n. Velocity: targets 0.5, 1.0, 1.5, ...
std::vector<TaskSpec> default_sequence(TaskFamily family, int n_tasks, int horizon = 50);

/// Perturbation of the expert that defines middle-quality data.
struct BehaviorNoise {
    double sigma = 0.4;
    double random_prob = 0.2;
};

/// Expert: full thrust along the heading (Direction) or unit-gain speed
/// control along the current direction of motion, clipped (Velocity).
/// Middle: a uniformly random action with probability random_prob,
/// otherwise the expert action plus N(0, sigma^2) noise, clipped.
std::array<Scalar, kActionDim> scripted_policy(std::span<const Scalar> state, const TaskSpec& task, Quality quality,
                                               Rng& rng, const BehaviorNoise& noise = {});

}  // namespace contdt
