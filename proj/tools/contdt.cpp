// Command-line front end: generate datasets, train one method, report.
#include <CLI11.hpp>
#include <iostream>

#include "contdt/errors.hpp"
#include "contdt/harness/commands.hpp"

using namespace contdt;

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Continual offline decision-transformer experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string method;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
    std::vector<std::string> report_dirs;
    std::string report_out = ".";

    auto* gen = app.add_subcommand("generate", "Write the offline dataset of every task");
    gen->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);

    auto* train = app.add_subcommand("train", "Train a method over the task sequence");
    train->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
    train->add_option("--method", method, "mhdt, loradt, vanilla, ewc or si (overrides the config)");
    train->add_option("--seed", seed, "Run a single seed instead of the configured list");
    train->add_flag("-v,--verbose", verbose, "Log the performance row after every task");

    auto* report = app.add_subcommand("report", "Summarise completed runs");
    report->add_option("dirs", report_dirs, "Run directories, or directories holding them")->required();
    report->add_option("--out", report_out, "Where to write the report tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) {
            cmd_generate(load_run_config(config_path), std::cout);
            return kExitOk;
        }
        if (*train) {
            RunConfig cfg = load_run_config(config_path);
            if (!method.empty()) cfg.method = parse_method(method);
            ExperimentHooks hooks;
            if (verbose) hooks.log = &std::cerr;
            return cmd_train(cfg, seed, std::cout, hooks);
        }
        std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
        cmd_report(dirs, report_out, std::cout);
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}
