#include "contdt/harness/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <json.hpp>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "contdt/errors.hpp"
#include "contdt/harness/io.hpp"

namespace fs = std::filesystem;

namespace contdt {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e)) return kExitIo;
    if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const RolloutError*>(&e)) return kExitNumeric;
    if (dynamic_cast<const Error*>(&e)) return kExitConfig;
    return 1;
}

std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return {buf, ptr};
}

void cmd_generate(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const auto datasets = generate_datasets(cfg);
    for (int i = 0; i < cfg.n_tasks; ++i) {
        const auto& d = datasets[static_cast<std::size_t>(i)];
        const fs::path path = dataset_path(cfg, i);
        save_dataset(path, d);
        out << path.string() << ": " << d.trajectories.size() << " trajectories, " << d.transitions()
            << " transitions, mean return " << d.mean_return() << "\n";
    }
}

std::vector<OfflineDataset> load_datasets(const RunConfig& cfg) {
    const auto tasks = cfg.tasks();
    std::vector<OfflineDataset> out;
    for (int i = 0; i < cfg.n_tasks; ++i) {
        const fs::path path = dataset_path(cfg, i);
        if (!fs::exists(path)) throw IoError("missing dataset " + path.string() + " (run generate first)");
        OfflineDataset d = load_dataset(path);
        const auto& t = tasks[static_cast<std::size_t>(i)];
        if (d.task.family != t.family || d.task.parameter != t.parameter || d.task.horizon != t.horizon ||
            d.quality != cfg.quality || static_cast<int>(d.trajectories.size()) != cfg.n_traj ||
            d.seed != dataset_seed(cfg, i))
            throw ConfigError("dataset " + path.string() + " was generated with a different config");
        d.task = t;
        out.push_back(std::move(d));
    }
    return out;
}

fs::path run_directory(const RunConfig& cfg, std::uint64_t seed) {
    return fs::path(cfg.output_dir) / (to_string(cfg.method) + "_seed" + std::to_string(seed));
}

namespace {

std::string curves_csv(const std::vector<CurvePoint>& curves) {
    std::string out = "global_step,training_task,eval_task,return\n";
    for (const auto& c : curves)
        out += std::to_string(c.global_step) + "," + std::to_string(c.training_task) + "," +
               std::to_string(c.eval_task) + "," + format_number(c.mean_return) + "\n";
    return out;
}

std::string report_json(const RunConfig& cfg, const RunResult& r) {
    const MemoryAccounting mem = memory_accounting(cfg);
    nlohmann::ordered_json j;
    j["method"] = to_string(r.method);
    j["seed"] = r.seed;
    j["status"] = r.failed ? "failed" : "complete";
    if (r.failed) j["failure"] = r.failure;
    j["memory"] = {{"buffer_floats_per_task", mem.buffer_floats_per_task},
                   {"buffer_bytes_per_task", mem.buffer_floats_per_task * sizeof(float)},
                   {"adapter_floats_per_task", mem.adapter_floats_per_task},
                   {"adapter_bytes_per_task", mem.adapter_floats_per_task * sizeof(float)}};
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (const auto& f : r.files) files.push_back(f.first);
    j["files"] = files;
    return j.dump(2) + "\n";
}

}  // namespace

void write_run(const RunConfig& cfg, const RunResult& result, const fs::path& dir) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    RunConfig written = cfg;
    written.method = result.method;
    write_file(dir / "config.txt", format_run_config(written));
    write_file(dir / "curves.csv", curves_csv(result.curves));
    write_file(dir / "matrix.csv", matrix_csv(result.matrix));
    write_file(dir / "metrics.json", metrics_json(to_string(result.method), result.seed, result.metrics) + "\n");
    write_file(dir / "report.json", report_json(cfg, result));
    for (const auto& [name, bytes] : result.files) write_file(dir / name, bytes);
    // Written last: a directory without STATUS was interrupted.
    write_file(dir / "STATUS", result.failed ? "failed: " + result.failure + "\n" : "complete\n");
}

void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

int job_limit() {
    if (const char* env = std::getenv("CONTIN_DT_THREADS")) {
        int n = 0;
        const std::string s(env);
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
        if (ec != std::errc() || ptr != s.data() + s.size() || n < 1)
            throw ConfigError("CONTIN_DT_THREADS must be a positive integer, got '" + s + "'");
        return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_train(const RunConfig& cfg, std::optional<std::uint64_t> seed, std::ostream& out,
              const ExperimentHooks& hooks) {
    cfg.validate();
    const auto datasets = load_datasets(cfg);
    const std::vector<std::uint64_t> seeds = seed ? std::vector<std::uint64_t>{*seed} : cfg.seeds;
    const int jobs = std::min<int>(job_limit(), static_cast<int>(seeds.size()));

    std::mutex io;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> any_failed{false};
    std::exception_ptr error;
    auto worker = [&] {
#ifdef _OPENMP
        // Parallel jobs already fill the cores; keep each one serial.
        if (jobs > 1) omp_set_num_threads(1);
#endif
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
            try {
                const RunResult r = run_experiment(cfg, seeds[i], datasets, hooks);
                const fs::path dir = run_directory(cfg, seeds[i]);
                write_run(cfg, r, dir);
                std::lock_guard lock(io);
                if (r.failed) any_failed = true;
                out << dir.string() << ": " << (r.failed ? "failed: " + r.failure : std::string("complete")) << "\n";
            } catch (...) {
                std::lock_guard lock(io);
                if (!error) error = std::current_exception();
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    return any_failed ? kExitNumeric : kExitOk;
}

namespace {

struct LoadedRun {
    fs::path dir;
    std::string method;
    std::uint64_t seed = 0;
    std::map<std::string, std::optional<double>> metrics;
    std::map<std::string, std::string> config;
};

bool is_run(const fs::path& dir) { return fs::exists(dir / "metrics.json") && fs::exists(dir / "config.txt"); }

std::vector<fs::path> expand(const std::vector<fs::path>& dirs) {
    std::vector<fs::path> out;
    for (const auto& d : dirs) {
        if (!fs::is_directory(d)) throw IoError("not a directory: " + d.string());
        if (is_run(d)) {
            out.push_back(d);
            continue;
        }
        std::vector<fs::path> children;
        for (const auto& e : fs::directory_iterator(d))
            if (e.is_directory() && is_run(e.path())) children.push_back(e.path());
        std::sort(children.begin(), children.end());
        out.insert(out.end(), children.begin(), children.end());
    }
    return out;
}

std::optional<LoadedRun> load_run(const fs::path& dir) {
    const fs::path status = dir / "STATUS";
    if (!fs::exists(status) || read_file(status) != "complete\n") return std::nullopt;
    LoadedRun run;
    run.dir = dir;
    try {
        const auto j = nlohmann::json::parse(read_file(dir / "metrics.json"));
        run.method = j.at("method").get<std::string>();
        run.seed = j.at("seed").get<std::uint64_t>();
        for (const char* key : {"PER", "BWT", "FWT", "DG"})
            run.metrics[key] = j.at(key).is_null() ? std::nullopt : std::optional<double>(j.at(key).get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed metrics in " + dir.string() + ": " + e.what());
    }
    run.config = config_entries(read_file(dir / "config.txt"));
    for (const char* k : {"method", "seeds", "data_dir", "output_dir"}) run.config.erase(k);
    return run;
}

std::optional<double> median(std::vector<double> v) {
    if (v.empty()) return std::nullopt;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

}  // namespace

ReportTables build_report(const std::vector<fs::path>& dirs) {
    std::vector<LoadedRun> runs;
    for (const auto& d : expand(dirs))
        if (auto r = load_run(d)) runs.push_back(std::move(*r));
    if (runs.empty()) throw IoError("no completed runs found");

    const auto& ref = runs.front();
    std::string diff;
    for (const auto& r : runs) {
        std::map<std::string, std::string> keys = ref.config;
        for (const auto& [k, v] : r.config) keys.emplace(k, "");
        for (const auto& [k, unused] : keys) {
            const auto a = ref.config.find(k), b = r.config.find(k);
            const std::string va = a == ref.config.end() ? "<unset>" : a->second;
            const std::string vb = b == r.config.end() ? "<unset>" : b->second;
            if (va != vb)
                diff += "  " + k + ": " + va + " (" + ref.dir.string() + ") vs " + vb + " (" + r.dir.string() + ")\n";
        }
    }
    if (!diff.empty()) throw ConfigError("runs were produced with incompatible configs:\n" + diff);

    std::map<Method, std::vector<const LoadedRun*>> by_method;
    for (const auto& r : runs) by_method[parse_method(r.method)].push_back(&r);

    // Everything but method, seeds and paths is shared, so any run's config
    // gives the memory table.
    std::string shared;
    for (const auto& [k, v] : ref.config) shared += k + " = " + v + "\n";
    const RunConfig cfg = parse_run_config(shared);
    const MemoryAccounting mem = memory_accounting(cfg);

    ReportTables t;
    t.metrics_csv = "method,seeds,PER,BWT,FWT,DG\n";
    t.memory_csv = "method,storage,floats_per_task,bytes_per_task\n";
    std::ostringstream text;
    text << pad("method", 10) << pad("seeds", 7) << pad("PER", 14) << pad("BWT", 14) << pad("FWT", 14) << "DG\n";
    std::ostringstream memtext;
    memtext << "\n" << pad("method", 10) << pad("storage", 15) << pad("floats/task", 13) << "bytes/task\n";
    for (const auto& [method, list] : by_method) {
        std::map<std::string, std::optional<double>> med;
        for (const char* key : {"PER", "BWT", "FWT", "DG"}) {
            std::vector<double> values;
            for (const auto* r : list)
                if (const auto& v = r->metrics.at(key)) values.push_back(*v);
            med[key] = median(values);
        }
        const std::string name = to_string(method);
        t.metrics_csv += name + "," + std::to_string(list.size()) + "," + cell(med["PER"]) + "," + cell(med["BWT"]) +
                         "," + cell(med["FWT"]) + "," + cell(med["DG"]) + "\n";
        auto shown = [](const std::optional<double>& v) {
            if (!v) return std::string("-");
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4f", *v);
            return std::string(buf);
        };
        text << pad(name, 10) << pad(std::to_string(list.size()), 7) << pad(shown(med["PER"]), 14)
             << pad(shown(med["BWT"]), 14) << pad(shown(med["FWT"]), 14) << shown(med["DG"]) << "\n";

        std::string storage = "none";
        std::size_t floats = 0;
        if (method == Method::MHDT) {
            storage = "replay buffer";
            floats = mem.buffer_floats_per_task;
        } else if (method == Method::LoRADT) {
            storage = "adapters";
            floats = mem.adapter_floats_per_task;
        }
        const std::size_t bytes = floats * sizeof(float);
        t.memory_csv += name + "," + storage + "," + std::to_string(floats) + "," + std::to_string(bytes) + "\n";
        memtext << pad(name, 10) << pad(storage, 15) << pad(std::to_string(floats), 13) << bytes << "\n";
    }
    t.text = text.str() + memtext.str();
    return t;
}

void cmd_report(const std::vector<fs::path>& dirs, const fs::path& out_dir, std::ostream& out) {
    const ReportTables t = build_report(dirs);
    write_file(out_dir / "report_metrics.csv", t.metrics_csv);
    write_file(out_dir / "report_memory.csv", t.memory_csv);
    write_file(out_dir / "report.txt", t.text);
    out << t.text;
}

}  // namespace contdt
