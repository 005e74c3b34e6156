#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "contdt/harness/config.hpp"
#include "contdt/metrics/metrics.hpp"

namespace contdt {

struct CurvePoint {
    long long global_step = 0;
    int training_task = 0;
    int eval_task = 0;
    double mean_return = 0;
};

struct MemoryAccounting {
    /// Floats one replay buffer stores: (s, a, s', r, done) per transition.
    std::size_t buffer_floats_per_task = 0;
    /// Floats one adapter set stores: 2 k r (h + d).
    std::size_t adapter_floats_per_task = 0;
};

MemoryAccounting memory_accounting(const RunConfig& cfg);

/// Observers for tests and tools; all optional.
struct ExperimentHooks {
    MHDTHook mhdt;
    LoRAHook lora;
    BaselineHook baseline;
    std::ostream* log = nullptr;
};

struct RunResult {
    Method method = Method::MHDT;
    std::uint64_t seed = 0;
    PerformanceMatrix matrix;
    MetricSummary metrics;
    std::vector<CurvePoint> curves;
    /// Relative path and contents of every checkpoint, buffer and adapter file.
    std::vector<std::pair<std::string, std::string>> files;
    bool failed = false;
    std::string failure;
};

std::uint64_t dataset_seed(const RunConfig& cfg, int task);
std::filesystem::path dataset_path(const RunConfig& cfg, int task);
/// One dataset per task of the configured sequence.
std::vector<OfflineDataset> generate_datasets(const RunConfig& cfg);

/// Trains cfg.method over the datasets with all randomness derived from
/// `seed`, evaluating every task after each task (and every eval_interval
/// steps for curves). Numeric and rollout failures end the run early with
/// `failed` set and whatever was measured so far.
RunResult run_experiment(const RunConfig& cfg, std::uint64_t seed, std::span<const OfflineDataset> datasets,
                         const ExperimentHooks& hooks = {});

}  // namespace contdt
