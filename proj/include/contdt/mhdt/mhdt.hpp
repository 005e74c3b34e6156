#pragma once

#include <functional>
#include <span>
#include <vector>

#include "contdt/dt/model.hpp"
#include "contdt/dt/rollout.hpp"
#include "contdt/numerics/adam.hpp"
#include "contdt/tasks/dataset.hpp"

namespace contdt {

/// Shared trunk with one head per task. Task indices are 0-based.
struct MultiHeadDT {
    DTConfig config;
    Trunk trunk;
    std::vector<HeadParams> heads;

    /// Trunk only; heads are added as tasks start.
    static MultiHeadDT init(const DTConfig& cfg, Rng& rng);

    /// Appends a freshly initialised head and returns its index.
    int add_head(Rng& rng);
    [[nodiscard]] int head_count() const { return static_cast<int>(heads.size()); }

    /// The single-task policy formed by the trunk and head `task`.
    [[nodiscard]] PolicyView view(int task) const;
    /// Standalone copy of that policy.
    [[nodiscard]] DTModel assemble(int task) const;

    /// "trunk.*" then "head<i>.*" for every head.
    ParamList parameters();
};

struct MHDTConfig {
    int k_select = 2;       // previous tasks rehearsed per step
    int select_period = 10; // steps between re-selections
    double lambda_distill = 0.5;
    double lambda_rehearsal = 1.0;
    int steps_per_task = 2000;
    int batch_size = 64;
    std::size_t buffer_capacity = 1000;  // transitions

    void validate() const;
};

/// Previous-task indices chosen for rehearsal.
using SelectSet = std::vector<int>;

/// One L_predict step on the standalone teacher.
double teacher_step(DTModel& teacher, std::span<const TrajectoryWindow> batch, Adam& opt);

/// Overwrites head `n` with the teacher's head parameters. Trunk and other
/// heads are left alone.
void copy_head(const DTModel& teacher, MultiHeadDT& pi, int n);

/// Mean squared gap to the teacher in action predictions plus the same in
/// hidden states, over valid positions. The teacher runs on its own
/// non-recording tape, so no gradient reaches it.
const Tensor& loss_distillation(Tape& tape, PolicyView student, PolicyView teacher,
                                std::span<const TrajectoryWindow> batch);
/// As above, reusing a student forward pass already on the tape.
const Tensor& loss_distillation(Tape& tape, const ForwardOutput& student_out, PolicyView student,
                                PolicyView teacher, std::span<const TrajectoryWindow> batch);

/// C_j for every previous task j < n: mean over valid state positions of the
/// cosine similarity between hidden states of head j and of the teacher.
std::vector<double> similarity_scores(const MultiHeadDT& pi, PolicyView teacher,
                                      std::span<const TrajectoryWindow> batch, int n);

/// Stable ascending argsort of the scores, truncated to k.
SelectSet lowest_k(std::span<const double> scores, int k);

/// The k previous tasks whose hidden states are least similar to the teacher's.
SelectSet select_tasks(const MultiHeadDT& pi, PolicyView teacher, std::span<const TrajectoryWindow> batch, int n,
                       int k);

struct RehearsalBatch {
    int task = 0;
    std::vector<TrajectoryWindow> windows;
};

/// One fresh batch per selected task from its replay buffer. Throws
/// ConfigError when a selected task has no buffer.
std::vector<RehearsalBatch> sample_rehearsal(const SelectSet& selected, std::span<const ReplayBuffer> buffers,
                                             std::size_t batch, const DTConfig& cfg, Rng& rng);

/// Mean over the batches of the action-cloning loss with each batch's own
/// head. Zero when there is nothing to rehearse.
const Tensor& loss_rehearsal(Tape& tape, const MultiHeadDT& pi, std::span<const RehearsalBatch> batches);

/// predict + lambda1 * distill + lambda2 * rehearsal. Absent terms are left
/// out of the graph entirely.
const Tensor& total_loss(Tape& tape, const Tensor& predict, const Tensor* distill, const Tensor* rehearsal,
                         double lambda1, double lambda2);

struct MHDTStep {
    int task = 0;
    int step = 0;
    const SelectSet* selected = nullptr;
    double teacher_loss = 0;
    double predict = 0;
    double distill = 0;
    double rehearsal = 0;
    double total = 0;
};

/// Called after every student update.
using MHDTHook = std::function<void(const MHDTStep&, const MultiHeadDT&, const DTModel& teacher)>;

struct MHDTTaskResult {
    DTModel teacher;
    ReplayBuffer buffer;
};

/// Trains task n (heads 0..n-1 must already exist). Each step updates the
/// teacher, copies its head into head n, refreshes the rehearsal set every
/// select_period steps, and takes one student step on the total loss. The
/// task's replay buffer is drawn from its dataset at the end.
MHDTTaskResult train_task_mhdt(MultiHeadDT& pi, int n, const OfflineDataset& data,
                               std::span<const ReplayBuffer> buffers, const MHDTConfig& cfg, Adam& opt, Rng& rng,
                               const MHDTHook& hook = {});

RolloutResult evaluate_mhdt(const MultiHeadDT& pi, int task, const Environment& env, Scalar target_return,
                            int episodes, Rng& rng);

}  // namespace contdt
