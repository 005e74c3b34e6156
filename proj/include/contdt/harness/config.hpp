#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "contdt/baselines/baselines.hpp"
#include "contdt/dt/config.hpp"
#include "contdt/lora/lora.hpp"
#include "contdt/mhdt/mhdt.hpp"
#include "contdt/tasks/task.hpp"

namespace contdt {

enum class Method { MHDT, LoRADT, Vanilla, EWC, SI };

std::string to_string(Method m);
Method parse_method(const std::string& text);

/// Everything a run needs, read from a flat "key = value" file.
struct RunConfig {
    Method method = Method::MHDT;

    TaskFamily family = TaskFamily::Direction;
    int n_tasks = 4;
    Quality quality = Quality::Expert;
    int n_traj = 200;
    int horizon = 50;
    std::uint64_t data_seed = 0;
    std::vector<std::uint64_t> seeds{0, 1, 2};

    int steps_per_task = 2000;
    int eval_interval = 200;  // 0 disables learning curves
    int eval_episodes = kDefaultEvalEpisodes;
    int batch_size = 64;
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;

    int context_len = 20;
    int n_layers = 3;
    int n_heads = 1;
    int embed_dim = 128;
    int mlp_dim = 128;
    LossPositions loss_positions = LossPositions::All;

    int k_select = 2;
    int select_period = 10;
    double lambda_distill = 0.5;
    double lambda_rehearsal = 1.0;
    std::size_t buffer_capacity = 1000;

    int lora_rank = 4;
    double merge_weight = 0.2;
    double teacher_fraction = 0.5;
    TeacherInit lora_teacher_init = TeacherInit::Base;

    double ewc_lambda = 100.0;
    int fisher_batches = 50;
    double si_c = 1.0;
    double si_xi = 1e-3;

    std::string data_dir = "data";
    std::string output_dir = "runs";

    /// Cross-field checks; throws ConfigError.
    void validate() const;

    [[nodiscard]] DTConfig dt() const;
    [[nodiscard]] AdamConfig adam() const;
    [[nodiscard]] MHDTConfig mhdt() const;
    [[nodiscard]] LoRAConfig lora() const;
    [[nodiscard]] BaselineConfig baseline() const;
    [[nodiscard]] std::vector<TaskSpec> tasks() const;
};

/// Parses "key = value" lines; '#' starts a comment. Unknown or repeated
/// keys and malformed values throw ConfigError naming the line.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key in a fixed order, one "key = value" per line; parses back to
/// an identical config.
std::string format_run_config(const RunConfig& cfg);

/// Key/value pairs of a formatted config, for comparisons.
std::map<std::string, std::string> config_entries(const std::string& text);

}  // namespace contdt
