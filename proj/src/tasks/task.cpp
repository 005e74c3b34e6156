#include "contdt/tasks/task.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "contdt/errors.hpp"

namespace contdt {

std::string to_string(TaskFamily family) { return family == TaskFamily::Direction ? "direction" : "velocity"; }
std::string to_string(Quality quality) { return quality == Quality::Expert ? "expert" : "middle"; }

TaskFamily parse_family(const std::string& text) {
    if (text == "direction") return TaskFamily::Direction;
    if (text == "velocity") return TaskFamily::Velocity;
    throw ConfigError("unknown task family '" + text + "' (expected direction|velocity)");
}

Quality parse_quality(const std::string& text) {
    if (text == "expert") return Quality::Expert;
    if (text == "middle") return Quality::Middle;
    throw ConfigError("unknown data quality '" + text + "' (expected expert|middle)");
}

Transition env_step(std::span<const Scalar> state, std::span<const Scalar> action, const TaskSpec& task) {
    if (state.size() != kStateDim || action.size() != kActionDim) throw DimensionError("env_step: bad dimensions");
    Transition tr;
    tr.next_state.assign(state.begin(), state.end());
    auto& s = tr.next_state;
    s[0] += state[2] * task.dt;
    s[1] += state[3] * task.dt;
    s[2] += action[0] * task.dt;
    s[3] += action[1] * task.dt;
    const Scalar speed = std::sqrt(s[2] * s[2] + s[3] * s[3]);
    if (speed > kMaxSpeed) {
        const Scalar shrink = kMaxSpeed / speed;
        s[2] *= shrink;
        s[3] *= shrink;
    }
    if (task.family == TaskFamily::Direction) {
        const auto c = static_cast<Scalar>(std::cos(task.parameter));
        const auto sn = static_cast<Scalar>(std::sin(task.parameter));
        tr.reward = s[2] * c + s[3] * sn;
    } else {
        const Scalar v = std::sqrt(s[2] * s[2] + s[3] * s[3]);
        tr.reward = -std::abs(v - static_cast<Scalar>(task.parameter));
    }
    return tr;
}

std::vector<Scalar> PointMassEnv::reset(Rng& rng) const {
    std::vector<Scalar> s(kStateDim);
    for (auto& v : s) v = static_cast<Scalar>(rng.normal(0.0, kInitialJitter));
    return s;
}

std::vector<TaskSpec> default_sequence(TaskFamily family, int n_tasks, int horizon) {
    if (n_tasks < 1) throw ConfigError("task sequence needs at least one task");
    std::vector<TaskSpec> out;
    for (int i = 0; i < n_tasks; ++i) {
        TaskSpec t;
        t.family = family;
        t.horizon = horizon;
        t.parameter = family == TaskFamily::Direction ? 2.0 * std::numbers::pi * i / n_tasks : 0.5 * (i + 1);
        out.push_back(t);
    }
    return out;
}

namespace {

Scalar clip_unit(double v) { return static_cast<Scalar>(std::clamp(v, -1.0, 1.0)); }

std::array<Scalar, kActionDim> expert_action(std::span<const Scalar> state, const TaskSpec& task) {
    if (task.family == TaskFamily::Direction) {
        return {clip_unit(std::cos(task.parameter)), clip_unit(std::sin(task.parameter))};
    }
    const double vx = state[2], vy = state[3];
    const double speed = std::sqrt(vx * vx + vy * vy);
    const double ux = speed > 1e-6 ? vx / speed : 1.0;
    const double uy = speed > 1e-6 ? vy / speed : 0.0;
    const double push = std::clamp(task.parameter - speed, -1.0, 1.0);
    return {clip_unit(push * ux), clip_unit(push * uy)};
}

}  // namespace

std::array<Scalar, kActionDim> scripted_policy(std::span<const Scalar> state, const TaskSpec& task, Quality quality,
                                               Rng& rng, const BehaviorNoise& noise) {
    auto action = expert_action(state, task);
    if (quality == Quality::Expert) return action;
    if (rng.uniform() < noise.random_prob) {
        for (auto& a : action) a = static_cast<Scalar>(rng.uniform(-1.0, 1.0));
        return action;
    }
    for (auto& a : action) a = clip_unit(a + (noise.sigma > 0 ? rng.normal(0.0, noise.sigma) : 0.0));
    return action;
}

}  // namespace contdt
