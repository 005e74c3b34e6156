#include "contdt/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "contdt/errors.hpp"

namespace contdt {

std::string to_string(Method m) {
    switch (m) {
        case Method::MHDT: return "mhdt";
        case Method::LoRADT: return "loradt";
        case Method::Vanilla: return "vanilla";
        case Method::EWC: return "ewc";
        case Method::SI: return "si";
    }
    return "?";
}

Method parse_method(const std::string& text) {
    for (Method m : {Method::MHDT, Method::LoRADT, Method::Vanilla, Method::EWC, Method::SI})
        if (to_string(m) == text) return m;
    throw ConfigError("unknown method '" + text + "' (expected mhdt, loradt, vanilla, ewc or si)");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& text) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw ConfigError("not a valid number: '" + text + "'");
    return value;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return {buf, ptr};
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field number(T RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& v) { c.*member = parse_number<T>(v); },
            [member](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>) {
                    return format_double(c.*member);
                } else {
                    return std::to_string(c.*member);
                }
            }};
}

Field text(std::string RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& v) { c.*member = v; },
            [member](const RunConfig& c) { return c.*member; }};
}

// Key order here is the order of format_run_config.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"method", {[](RunConfig& c, const std::string& v) { c.method = parse_method(v); },
                    [](const RunConfig& c) { return to_string(c.method); }}},
        {"family", {[](RunConfig& c, const std::string& v) { c.family = parse_family(v); },
                    [](const RunConfig& c) { return to_string(c.family); }}},
        {"n_tasks", number(&RunConfig::n_tasks)},
        {"quality", {[](RunConfig& c, const std::string& v) { c.quality = parse_quality(v); },
                     [](const RunConfig& c) { return to_string(c.quality); }}},
        {"n_traj", number(&RunConfig::n_traj)},
        {"horizon", number(&RunConfig::horizon)},
        {"data_seed", number(&RunConfig::data_seed)},
        {"seeds",
         {[](RunConfig& c, const std::string& v) {
              c.seeds.clear();
              std::stringstream ss(v);
              std::string item;
              while (std::getline(ss, item, ',')) c.seeds.push_back(parse_number<std::uint64_t>(trim(item)));
          },
          [](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
              return out;
          }}},
        {"steps_per_task", number(&RunConfig::steps_per_task)},
        {"eval_interval", number(&RunConfig::eval_interval)},
        {"eval_episodes", number(&RunConfig::eval_episodes)},
        {"batch_size", number(&RunConfig::batch_size)},
        {"learning_rate", number(&RunConfig::learning_rate)},
        {"weight_decay", number(&RunConfig::weight_decay)},
        {"context_len", number(&RunConfig::context_len)},
        {"n_layers", number(&RunConfig::n_layers)},
        {"n_heads", number(&RunConfig::n_heads)},
        {"embed_dim", number(&RunConfig::embed_dim)},
        {"mlp_dim", number(&RunConfig::mlp_dim)},
        {"loss_positions",
         {[](RunConfig& c, const std::string& v) {
              if (v == "all") {
                  c.loss_positions = LossPositions::All;
              } else if (v == "last") {
                  c.loss_positions = LossPositions::Last;
              } else {
                  throw ConfigError("loss_positions must be 'all' or 'last'");
              }
          },
          [](const RunConfig& c) { return std::string(c.loss_positions == LossPositions::All ? "all" : "last"); }}},
        {"k_select", number(&RunConfig::k_select)},
        {"select_period", number(&RunConfig::select_period)},
        {"lambda_distill", number(&RunConfig::lambda_distill)},
        {"lambda_rehearsal", number(&RunConfig::lambda_rehearsal)},
        {"buffer_capacity", number(&RunConfig::buffer_capacity)},
        {"lora_rank", number(&RunConfig::lora_rank)},
        {"merge_weight", number(&RunConfig::merge_weight)},
        {"teacher_fraction", number(&RunConfig::teacher_fraction)},
        {"lora_teacher_init",
         {[](RunConfig& c, const std::string& v) {
              if (v == "scratch") {
                  c.lora_teacher_init = TeacherInit::Scratch;
              } else if (v == "base") {
                  c.lora_teacher_init = TeacherInit::Base;
              } else {
                  throw ConfigError("lora_teacher_init must be 'scratch' or 'base'");
              }
          },
          [](const RunConfig& c) {
              return std::string(c.lora_teacher_init == TeacherInit::Scratch ? "scratch" : "base");
          }}},
        {"ewc_lambda", number(&RunConfig::ewc_lambda)},
        {"fisher_batches", number(&RunConfig::fisher_batches)},
        {"si_c", number(&RunConfig::si_c)},
        {"si_xi", number(&RunConfig::si_xi)},
        {"data_dir", text(&RunConfig::data_dir)},
        {"output_dir", text(&RunConfig::output_dir)},
    };
    return table;
}

}  // namespace

void RunConfig::validate() const {
    if (n_tasks < 1) throw ConfigError("n_tasks must be >= 1");
    if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw ConfigError("seeds must be distinct");
    if (eval_interval < 0) throw ConfigError("eval_interval must be >= 0");
    if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
    if (buffer_capacity < static_cast<std::size_t>(horizon))
        throw ConfigError("buffer_capacity must hold at least one trajectory (>= horizon)");
    if (data_dir.empty() || output_dir.empty()) throw ConfigError("data_dir and output_dir must be set");
    dt().validate();
    mhdt().validate();
    lora().validate(dt());
    baseline().validate();
}

DTConfig RunConfig::dt() const {
    DTConfig c;
    c.context_len = context_len;
    c.n_layers = n_layers;
    c.n_heads = n_heads;
    c.embed_dim = embed_dim;
    c.mlp_dim = mlp_dim;
    c.state_dim = kStateDim;
    c.action_dim = kActionDim;
    c.max_timestep = horizon;
    c.loss_positions = loss_positions;
    return c;
}

AdamConfig RunConfig::adam() const {
    AdamConfig a;
    a.learning_rate = learning_rate;
    a.weight_decay = weight_decay;
    return a;
}

MHDTConfig RunConfig::mhdt() const {
    MHDTConfig c;
    c.k_select = k_select;
    c.select_period = select_period;
    c.lambda_distill = lambda_distill;
    c.lambda_rehearsal = lambda_rehearsal;
    c.steps_per_task = steps_per_task;
    c.batch_size = batch_size;
    c.buffer_capacity = buffer_capacity;
    return c;
}

LoRAConfig RunConfig::lora() const {
    LoRAConfig c;
    c.rank = lora_rank;
    c.merge_weight = merge_weight;
    c.steps_per_task = steps_per_task;
    c.teacher_fraction = teacher_fraction;
    c.teacher_init = lora_teacher_init;
    c.batch_size = batch_size;
    return c;
}

BaselineConfig RunConfig::baseline() const {
    BaselineConfig c;
    c.kind = method == Method::EWC ? Regularizer::EWC : method == Method::SI ? Regularizer::SI : Regularizer::None;
    c.steps_per_task = steps_per_task;
    c.batch_size = batch_size;
    c.ewc_lambda = ewc_lambda;
    c.fisher_batches = fisher_batches;
    c.si_c = si_c;
    c.si_xi = si_xi;
    return c;
}

std::vector<TaskSpec> RunConfig::tasks() const { return default_sequence(family, n_tasks, horizon); }

RunConfig parse_run_config(const std::string& body) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(body);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
        if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ConfigError(where + "repeated key '" + key + "'");
        if (value.empty()) throw ConfigError(where + "empty value for '" + key + "'");
        try {
            it->second.set(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + key + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
    return out;
}

std::map<std::string, std::string> config_entries(const std::string& body) {
    std::map<std::string, std::string> out;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

}  // namespace contdt
