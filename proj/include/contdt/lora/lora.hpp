#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "contdt/dt/model.hpp"
#include "contdt/dt/rollout.hpp"
#include "contdt/numerics/adam.hpp"
#include "contdt/tasks/dataset.hpp"

namespace contdt {

/// Starting point of the per-task teacher: a fresh random model, or a copy
/// of the current base without adapters.
enum class TeacherInit { Scratch, Base };

struct LoRAConfig {
    int rank = 4;
    double merge_weight = 0.2;
    int steps_per_task = 2000;
    /// Share of a task's step budget spent training its teacher (tasks after
    /// the first); the rest goes to adapter fine-tuning.
    double teacher_fraction = 0.5;
    TeacherInit teacher_init = TeacherInit::Base;
    int batch_size = 64;

    void validate(const DTConfig& dt) const;
    [[nodiscard]] int teacher_steps() const;
};

/// Adapter matrices of every block, saved after training one task.
struct AdapterSet {
    int task = 0;
    std::vector<LoRAAdapter> blocks;

    [[nodiscard]] std::size_t element_count() const;
};

/// Stored numbers per task: 2 k r (h + d).
std::size_t memory_footprint(int n_layers, int rank, int embed_dim, int mlp_dim);
std::size_t memory_footprint(const DTConfig& dt, const LoRAConfig& lora);

/// FNV-1a over names and values of every non-adapter tensor.
std::uint64_t base_fingerprint(const DTModel& model);

class AdapterStore {
public:
    /// Replaces any earlier set for the same task.
    void put(AdapterSet set, std::uint64_t fingerprint);
    [[nodiscard]] bool contains(int task) const { return sets_.count(task) != 0; }
    /// Throws LookupError for unknown tasks.
    [[nodiscard]] const AdapterSet& get(int task) const;
    [[nodiscard]] std::uint64_t fingerprint(int task) const;
    [[nodiscard]] const std::map<int, AdapterSet>& sets() const noexcept { return sets_; }

private:
    std::map<int, AdapterSet> sets_;
    std::map<int, std::uint64_t> fingerprints_;
};

/// theta <- (1 - lambda) theta + lambda theta_teacher for every tensor except
/// the block MLP bases (W0, b0, W1, b1) and adapters. The action head and
/// timestep table are merged too.
void merge_weights(DTModel& pi, const DTModel& teacher, double lambda);

/// Fresh adapters on every block: A ~ N(0, 0.02^2), B = 0.
void init_adapters(DTModel& model, int rank, Rng& rng);

AdapterSet extract_adapters(const DTModel& model, int task);

/// Installs the stored adapters of `task`; nothing else changes.
void swap_adapters(DTModel& model, const AdapterStore& store, int task);
void install_adapters(DTModel& model, const AdapterSet& set);

/// Parameters outside the adapters: frozen for good once the first task is
/// done. Merging still writes their values.
void freeze_base(DTModel& model);
ParamList adapter_parameters(DTModel& model);

enum class LoRAPhase { Full, Teacher, Adapter };

struct LoRAStep {
    int task = 0;
    int step = 0;  // within the task, over all phases
    LoRAPhase phase = LoRAPhase::Full;
    double loss = 0;
};

/// Called after every optimiser step of either model.
using LoRAHook = std::function<void(const LoRAStep&, const DTModel& pi, const DTModel* teacher)>;

struct LoRATaskResult {
    std::optional<DTModel> teacher;
    AdapterSet adapters;
};

/// Task 0 trains every parameter of pi, then installs identity adapters and
/// freezes the base. Later tasks train a teacher (see TeacherInit), merge it into
/// pi once, and fit fresh adapters with everything else frozen.
LoRATaskResult finetune_task_lora(DTModel& pi, int n, const OfflineDataset& data, const LoRAConfig& cfg,
                                  const AdamConfig& adam, Rng& rng, const LoRAHook& hook = {});

}  // namespace contdt
