#pragma once

#include <span>
#include <vector>

#include "contdt/dt/model.hpp"
#include "contdt/numerics/rng.hpp"

namespace contdt {

struct Transition {
    std::vector<Scalar> next_state;
    Scalar reward = 0;
};

/// Episodic environment driven by a DT during evaluation.
class Environment {
public:
    virtual ~Environment() = default;
    [[nodiscard]] virtual int horizon() const = 0;
    [[nodiscard]] virtual int state_dim() const = 0;
    [[nodiscard]] virtual int action_dim() const = 0;
    /// Initial state; any randomness comes from `rng`.
    virtual std::vector<Scalar> reset(Rng& rng) const = 0;
    [[nodiscard]] virtual Transition step(std::span<const Scalar> state, std::span<const Scalar> action) const = 0;
};

struct RolloutResult {
    double mean_return = 0;
    std::vector<double> episode_returns;
    /// Return-to-go fed to the model at every step of every episode.
    std::vector<std::vector<Scalar>> rtg_trace;
};

inline constexpr int kDefaultEvalEpisodes = 10;

/// Return-conditioned evaluation. Episodes advance in lock step as one
/// batch; each keeps its last K steps as the model input, conditions on
/// rtg_t = target_return - (rewards collected so far) and acts with the
/// prediction at its newest state token.
RolloutResult rollout(PolicyView policy, const Environment& env, Scalar target_return,
                      int episodes, Rng& rng);

}  // namespace contdt
