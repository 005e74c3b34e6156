#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "contdt/dt/model.hpp"
#include "contdt/numerics/adam.hpp"
#include "contdt/tasks/dataset.hpp"

namespace contdt {

enum class Regularizer { None, EWC, SI };

/// Per-parameter importance and the anchor it pulls towards, keyed by
/// parameter name.
struct ImportanceMap {
    std::map<std::string, Tensor> importance;
    std::map<std::string, Tensor> anchor;
};

struct BaselineConfig {
    Regularizer kind = Regularizer::None;
    int steps_per_task = 2000;
    int batch_size = 64;
    double ewc_lambda = 100.0;
    int fisher_batches = 50;
    double si_c = 1.0;
    double si_xi = 1e-3;

    void validate() const;
    /// Strength of the quadratic penalty for the configured kind.
    [[nodiscard]] double penalty_weight() const;
};

/// Diagonal Fisher proxy: mean over `batches` batches of the squared
/// prediction-loss gradient. Anchored at the current parameters.
ImportanceMap estimate_fisher(DTModel& model, std::span<const Trajectory> data, int batches, std::size_t batch_size,
                              Rng& rng);

/// lambda * sum over maps and parameters of F (theta - theta*)^2.
const Tensor& importance_penalty(Tape& tape, const ParamList& params, std::span<const ImportanceMap> maps,
                                 double lambda);

/// Path-integral importance of synaptic intelligence.
class SITracker {
public:
    /// Remembers the task's starting point and zeroes the running path integral.
    void begin_task(const ParamList& params);
    /// omega += -g * (after - before) for one optimiser step.
    void record(const std::map<std::string, std::vector<Scalar>>& grads,
                const std::map<std::string, std::vector<Scalar>>& before, const ParamList& params);
    /// Omega += omega / ((theta - theta_start)^2 + xi) and re-anchor at theta.
    void end_task(const ParamList& params, double xi);

    [[nodiscard]] const std::map<std::string, std::vector<Scalar>>& omega() const noexcept { return omega_; }
    /// Accumulated importance and current anchor; empty before the first task ends.
    [[nodiscard]] const ImportanceMap& importance() const noexcept { return total_; }

private:
    std::map<std::string, std::vector<Scalar>> omega_;
    std::map<std::string, std::vector<Scalar>> start_;
    ImportanceMap total_;
};

/// Everything a regularised sequential learner carries between tasks.
struct BaselineState {
    DTModel model;
    Adam opt;
    std::vector<ImportanceMap> ewc_maps;
    SITracker si;
};

using BaselineHook = std::function<void(int task, int step, double loss, const DTModel& model)>;

/// Trains one task with the prediction loss plus the configured penalty,
/// then records the task's importance.
void train_task_baseline(BaselineState& state, int n, const OfflineDataset& data, const BaselineConfig& cfg, Rng& rng,
                         const BaselineHook& hook = {});

/// Plain fine-tuning through every dataset in order.
void train_vanilla_sequential(BaselineState& state, std::span<const OfflineDataset> datasets,
                              const BaselineConfig& cfg, Rng& rng, const BaselineHook& hook = {});

}  // namespace contdt
