#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "contdt/harness/experiment.hpp"

namespace contdt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

/// Maps library exceptions onto process exit codes.
int exit_code_for(const std::exception& e);

/// Writes one dataset file per task and prints transition counts.
void cmd_generate(const RunConfig& cfg, std::ostream& out);

/// Loads the task datasets written by cmd_generate, refusing files that do
/// not match the config.
std::vector<OfflineDataset> load_datasets(const RunConfig& cfg);

std::filesystem::path run_directory(const RunConfig& cfg, std::uint64_t seed);

/// Writes config, curves, matrix, metrics, report, artifacts and STATUS
/// into `dir`, replacing anything there.
void write_run(const RunConfig& cfg, const RunResult& result, const std::filesystem::path& dir);

/// Runs the configured method for one seed, or for every configured seed as
/// parallel jobs (at most CONTIN_DT_THREADS at once). Returns the exit code.
int cmd_train(const RunConfig& cfg, std::optional<std::uint64_t> seed, std::ostream& out,
              const ExperimentHooks& hooks = {});

/// Upper bound on concurrent jobs: CONTIN_DT_THREADS if set, else the
/// hardware concurrency.
int job_limit();

/// Keeps freed tape buffers in the heap instead of returning them to the
/// kernel after every step. No-op outside glibc.
void tune_allocator();

struct ReportTables {
    std::string metrics_csv;
    std::string memory_csv;
    std::string text;
};

/// Per-method medians over seeds plus the memory table, from completed run
/// directories (a directory holding run directories is expanded). Refuses
/// runs whose configs differ in anything but method and seed.
ReportTables build_report(const std::vector<std::filesystem::path>& dirs);

/// build_report, written to `out_dir` and echoed as text.
void cmd_report(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out_dir,
                std::ostream& out);

/// Shortest decimal that reads back to the same double.
std::string format_number(double v);

}  // namespace contdt
