#include "contdt/harness/experiment.hpp"

#include <functional>
#include <ostream>

#include "contdt/errors.hpp"
#include "contdt/harness/io.hpp"

namespace contdt {

MemoryAccounting memory_accounting(const RunConfig& cfg) {
    const DTConfig dt = cfg.dt();
    const std::size_t per_transition = 2 * static_cast<std::size_t>(dt.state_dim) + dt.action_dim + 2;
    return {cfg.buffer_capacity * per_transition, memory_footprint(dt, cfg.lora())};
}

std::uint64_t dataset_seed(const RunConfig& cfg, int task) {
    return Rng(cfg.data_seed).child("dataset").child(static_cast<std::uint64_t>(task)).seed();
}

std::filesystem::path dataset_path(const RunConfig& cfg, int task) {
    return std::filesystem::path(cfg.data_dir) /
           (to_string(cfg.family) + "_task" + std::to_string(task) + "_" + to_string(cfg.quality) + ".jsonl");
}

std::vector<OfflineDataset> generate_datasets(const RunConfig& cfg) {
    std::vector<OfflineDataset> out;
    const auto tasks = cfg.tasks();
    for (int i = 0; i < cfg.n_tasks; ++i)
        out.push_back(generate_dataset(tasks[static_cast<std::size_t>(i)], cfg.quality, cfg.n_traj, dataset_seed(cfg, i)));
    return out;
}

namespace {

class Runner {
public:
    Runner(const RunConfig& cfg, std::uint64_t seed, std::span<const OfflineDataset> datasets,
           const ExperimentHooks& hooks)
        : cfg_(cfg), dt_(cfg.dt()), root_(seed), datasets_(datasets), hooks_(hooks) {
        result_.method = cfg.method;
        result_.seed = seed;
        result_.matrix = PerformanceMatrix(n_tasks());
        for (const auto& d : datasets) {
            envs_.emplace_back(d.task);
            targets_.push_back(d.max_return());
        }
    }

    RunResult run() {
        try {
            measure_random_init();
            switch (cfg_.method) {
                case Method::MHDT: run_mhdt(); break;
                case Method::LoRADT: run_lora(); break;
                case Method::Vanilla:
                case Method::EWC:
                case Method::SI: run_baseline(); break;
            }
            result_.metrics = summarize(result_.matrix);
        } catch (const NumericError& e) {
            fail(e.what());
        } catch (const RolloutError& e) {
            fail(e.what());
        }
        return std::move(result_);
    }

private:
    using PolicyFor = std::function<PolicyView(int task)>;

    [[nodiscard]] int n_tasks() const { return static_cast<int>(datasets_.size()); }

    void fail(const std::string& why) {
        result_.failed = true;
        result_.failure = why;
        result_.metrics = summarize(result_.matrix);
        log() << "run failed: " << why << "\n";
    }

    std::ostream& log() { return hooks_.log ? *hooks_.log : silent_; }

    // Every evaluation of task j starts episodes from the same stream, so
    // returns at different points of training are directly comparable.
    double evaluate(PolicyView policy, int task) {
        Rng rng = root_.child("eval").child(static_cast<std::uint64_t>(task));
        const auto j = static_cast<std::size_t>(task);
        return rollout(policy, envs_[j], targets_[j], cfg_.eval_episodes, rng).mean_return;
    }

    std::vector<double> evaluate_all(const PolicyFor& policy_for) {
        std::vector<double> row;
        for (int j = 0; j < n_tasks(); ++j) row.push_back(evaluate(policy_for(j), j));
        return row;
    }

    void curve_point(int task, int step, const PolicyFor& policy_for) {
        if (cfg_.eval_interval <= 0 || (step + 1) % cfg_.eval_interval != 0) return;
        const long long global = static_cast<long long>(task) * cfg_.steps_per_task + step + 1;
        const auto row = evaluate_all(policy_for);
        for (int j = 0; j < n_tasks(); ++j) result_.curves.push_back({global, task, j, row[static_cast<std::size_t>(j)]});
    }

    void finish_task(int task, const PolicyFor& policy_for) {
        const auto row = evaluate_all(policy_for);
        result_.matrix.set_row(task, row);
        log() << to_string(cfg_.method) << " seed " << result_.seed << " task " << task << " row:";
        for (double r : row) log() << " " << r;
        log() << "\n";
    }

    void measure_random_init() {
        Rng init = root_.child("init");
        const DTModel fresh = DTModel::init(dt_, init);
        for (int j = 0; j < n_tasks(); ++j) result_.matrix.b_bar[static_cast<std::size_t>(j)] = evaluate(fresh.view(), j);
    }

    void run_baseline() {
        Rng init = root_.child("init");
        BaselineState state{DTModel::init(dt_, init), Adam(cfg_.adam()), {}, {}};
        const BaselineConfig bcfg = cfg_.baseline();
        const PolicyFor policy = [&](int) { return state.model.view(); };
        for (int n = 0; n < n_tasks(); ++n) {
            Rng task_rng = root_.child("train").child(static_cast<std::uint64_t>(n));
            train_task_baseline(state, n, datasets_[static_cast<std::size_t>(n)], bcfg, task_rng,
                                [&](int task, int step, double loss, const DTModel& model) {
                                    if (hooks_.baseline) hooks_.baseline(task, step, loss, model);
                                    curve_point(task, step, policy);
                                });
            finish_task(n, policy);
        }
        result_.files.emplace_back("model.cdt", encode_checkpoint(snapshot(state.model.parameters())));
    }

    void run_mhdt() {
        Rng init = root_.child("init");
        MultiHeadDT pi = MultiHeadDT::init(dt_, init);
        Adam opt(cfg_.adam());
        const MHDTConfig mcfg = cfg_.mhdt();
        std::vector<ReplayBuffer> buffers;
        // Task j uses head j once it exists, otherwise the newest head.
        const PolicyFor policy = [&](int j) { return pi.view(std::min(j, pi.head_count() - 1)); };
        for (int n = 0; n < n_tasks(); ++n) {
            const auto& data = datasets_[static_cast<std::size_t>(n)];
            Rng task_rng = root_.child("train").child(static_cast<std::uint64_t>(n));
            auto res = train_task_mhdt(pi, n, data, buffers, mcfg, opt, task_rng,
                                       [&](const MHDTStep& s, const MultiHeadDT& model, const DTModel& teacher) {
                                           if (hooks_.mhdt) hooks_.mhdt(s, model, teacher);
                                           curve_point(s.task, s.step, policy);
                                       });
            result_.matrix.teacher[static_cast<std::size_t>(n)] = evaluate(res.teacher.view(), n);
            result_.files.emplace_back("buffers/task" + std::to_string(n) + ".jsonl", encode_buffer(res.buffer, data));
            buffers.push_back(std::move(res.buffer));
            finish_task(n, policy);
        }
        result_.files.emplace_back("model.cdt", encode_checkpoint(snapshot(pi.parameters())));
    }

    void run_lora() {
        Rng init = root_.child("init");
        DTModel pi = DTModel::init(dt_, init);
        AdapterStore store;
        const LoRAConfig lcfg = cfg_.lora();
        DTModel scratch = pi;
        // Finished tasks use their own adapters; the current and future tasks
        // use whatever the model carries right now.
        const PolicyFor policy = [&](int j) {
            if (store.contains(j) && j < current_) {
                scratch = pi;
                swap_adapters(scratch, store, j);
                return scratch.view();
            }
            return pi.view();
        };
        for (int n = 0; n < n_tasks(); ++n) {
            current_ = n;
            const auto& data = datasets_[static_cast<std::size_t>(n)];
            Rng task_rng = root_.child("train").child(static_cast<std::uint64_t>(n));
            auto res = finetune_task_lora(pi, n, data, lcfg, cfg_.adam(), task_rng,
                                          [&](const LoRAStep& s, const DTModel& model, const DTModel* teacher) {
                                              if (hooks_.lora) hooks_.lora(s, model, teacher);
                                              curve_point(s.task, s.step, policy);
                                          });
            if (res.teacher) result_.matrix.teacher[static_cast<std::size_t>(n)] = evaluate(res.teacher->view(), n);
            const std::uint64_t fp = base_fingerprint(pi);
            result_.files.emplace_back("adapters/task" + std::to_string(n) + ".cdt",
                                       encode_checkpoint(adapter_entries(res.adapters, dt_, fp)));
            store.put(std::move(res.adapters), fp);
            current_ = n + 1;
            finish_task(n, policy);
        }
        ParamList base;
        for (auto& p : pi.parameters())
            if (p.name.find(".lora.") == std::string::npos) base.push_back(p);
        result_.files.emplace_back("model.cdt", encode_checkpoint(snapshot(base)));
    }

    const RunConfig& cfg_;
    DTConfig dt_;
    Rng root_;
    std::span<const OfflineDataset> datasets_;
    const ExperimentHooks& hooks_;
    std::vector<PointMassEnv> envs_;
    std::vector<Scalar> targets_;
    RunResult result_;
    int current_ = 0;
    std::ostream silent_{nullptr};
};

}  // namespace

RunResult run_experiment(const RunConfig& cfg, std::uint64_t seed, std::span<const OfflineDataset> datasets,
                         const ExperimentHooks& hooks) {
    cfg.validate();
    if (static_cast<int>(datasets.size()) != cfg.n_tasks)
        throw ConfigError("expected " + std::to_string(cfg.n_tasks) + " datasets, got " +
                          std::to_string(datasets.size()));
    return Runner(cfg, seed, datasets, hooks).run();
}

}  // namespace contdt
