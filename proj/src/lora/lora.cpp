#include "contdt/lora/lora.hpp"

#include <cmath>

#include "contdt/dt/train.hpp"
#include "contdt/errors.hpp"

namespace contdt {

void LoRAConfig::validate(const DTConfig& dt) const {
    if (rank < 1 || rank > std::min(dt.embed_dim, dt.mlp_dim))
        throw ConfigError("lora rank must be in [1, min(h, d)], got " + std::to_string(rank));
    if (!(merge_weight >= 0 && merge_weight <= 1)) throw ConfigError("merge_weight must be in [0, 1]");
    if (!(teacher_fraction >= 0 && teacher_fraction <= 1)) throw ConfigError("teacher_fraction must be in [0, 1]");
    if (steps_per_task < 1) throw ConfigError("steps_per_task must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

int LoRAConfig::teacher_steps() const {
    return static_cast<int>(std::lround(teacher_fraction * steps_per_task));
}

std::size_t AdapterSet::element_count() const {
    std::size_t n = 0;
    for (const auto& a : blocks) visit_adapter(a, [&](const char*, const Tensor& t) { n += t.numel(); });
    return n;
}

std::size_t memory_footprint(int n_layers, int rank, int embed_dim, int mlp_dim) {
    return 2 * static_cast<std::size_t>(n_layers) * static_cast<std::size_t>(rank) *
           static_cast<std::size_t>(embed_dim + mlp_dim);
}

std::size_t memory_footprint(const DTConfig& dt, const LoRAConfig& lora) {
    return memory_footprint(dt.n_layers, lora.rank, dt.embed_dim, dt.mlp_dim);
}

namespace {

// Visits every tensor except adapters, in a fixed order.
template <class M, class F>
void visit_base(M& model, F&& f) {
    visit_head(model.head, [&](const std::string& n, auto& t) { f("head." + n, t, false); });
    for (std::size_t i = 0; i < model.trunk.blocks.size(); ++i) {
        auto& block = model.trunk.blocks[i];
        const std::string prefix = "trunk.block" + std::to_string(i) + ".";
        visit_block_non_mlp(block, [&](const std::string& n, auto& t) { f(prefix + n, t, false); });
        visit_block_mlp(block, [&](const std::string& n, auto& t) { f(prefix + n, t, true); });
    }
}

}  // namespace

std::uint64_t base_fingerprint(const DTModel& model) {
    std::uint64_t h = fnv1a64(nullptr, 0);
    visit_base(model, [&](const std::string& name, const Tensor& t, bool) {
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(t.data(), t.numel() * sizeof(Scalar), h);
    });
    return h;
}

void AdapterStore::put(AdapterSet set, std::uint64_t fingerprint) {
    const int task = set.task;
    sets_[task] = std::move(set);
    fingerprints_[task] = fingerprint;
}

const AdapterSet& AdapterStore::get(int task) const {
    const auto it = sets_.find(task);
    if (it == sets_.end()) throw LookupError("no adapter set stored for task " + std::to_string(task));
    return it->second;
}

std::uint64_t AdapterStore::fingerprint(int task) const {
    (void)get(task);
    return fingerprints_.at(task);
}

void merge_weights(DTModel& pi, const DTModel& teacher, double lambda) {
    if (!(lambda >= 0 && lambda <= 1)) throw ConfigError("merge weight must be in [0, 1]");
    std::vector<const Tensor*> src;
    visit_base(teacher, [&](const std::string&, const Tensor& t, bool) { src.push_back(&t); });
    std::size_t i = 0;
    const auto keep = static_cast<Scalar>(1.0 - lambda);
    const auto take = static_cast<Scalar>(lambda);
    visit_base(pi, [&](const std::string& name, Tensor& t, bool mlp) {
        if (i >= src.size()) throw ConfigError("merge_weights: architectures differ");
        const Tensor& s = *src[i++];
        if (s.shape() != t.shape()) throw ConfigError("merge_weights: shape mismatch in " + name);
        if (mlp || lambda == 0) return;
        auto dst = t.values();
        const auto from = s.values();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = keep * dst[j] + take * from[j];
    });
    if (i != src.size()) throw ConfigError("merge_weights: architectures differ");
}

void init_adapters(DTModel& model, int rank, Rng& rng) {
    const auto r = static_cast<std::size_t>(rank);
    const std::size_t h = model.config.embed_dim, d = model.config.mlp_dim;
    auto gaussian = [&](Shape shape) {
        Tensor t(std::move(shape));
        for (auto& v : t.values()) v = static_cast<Scalar>(rng.normal(0.0, 0.02));
        t.set_requires_grad(true);
        return t;
    };
    auto zeros = [](Shape shape) {
        Tensor t(std::move(shape));
        t.set_requires_grad(true);
        return t;
    };
    for (auto& block : model.trunk.blocks) {
        LoRAAdapter a;
        a.a0 = gaussian({r, h});
        a.b0 = zeros({d, r});
        a.a1 = gaussian({r, d});
        a.b1 = zeros({h, r});
        block.lora = std::move(a);
    }
}

AdapterSet extract_adapters(const DTModel& model, int task) {
    AdapterSet set{task, {}};
    for (const auto& block : model.trunk.blocks) {
        if (!block.lora) throw LookupError("model carries no adapters");
        set.blocks.push_back(*block.lora);
    }
    for (auto& a : set.blocks) visit_adapter(a, [](const char*, Tensor& t) { t.clear_grad(); });
    return set;
}

void install_adapters(DTModel& model, const AdapterSet& set) {
    if (set.blocks.size() != model.trunk.blocks.size())
        throw ConfigError("adapter set has " + std::to_string(set.blocks.size()) + " blocks, model has " +
                          std::to_string(model.trunk.blocks.size()));
    for (std::size_t i = 0; i < set.blocks.size(); ++i) {
        const auto& a = set.blocks[i];
        const auto& block = model.trunk.blocks[i];
        if (a.a0.shape() != Shape{a.a0.shape()[0], block.w0.shape()[1]} ||
            a.b0.shape() != Shape{block.w0.shape()[0], a.a0.shape()[0]} ||
            a.a1.shape() != Shape{a.a0.shape()[0], block.w1.shape()[1]} ||
            a.b1.shape() != Shape{block.w1.shape()[0], a.a0.shape()[0]})
            throw ConfigError("adapter shapes do not match block " + std::to_string(i));
    }
    for (std::size_t i = 0; i < set.blocks.size(); ++i) model.trunk.blocks[i].lora = set.blocks[i];
}

void swap_adapters(DTModel& model, const AdapterStore& store, int task) {
    install_adapters(model, store.get(task));
}

void freeze_base(DTModel& model) {
    visit_base(model, [](const std::string&, Tensor& t, bool) { t.set_frozen(true); });
}

ParamList adapter_parameters(DTModel& model) {
    ParamList out;
    for (std::size_t i = 0; i < model.trunk.blocks.size(); ++i) {
        auto& block = model.trunk.blocks[i];
        if (!block.lora) continue;
        const std::string prefix = "trunk.block" + std::to_string(i) + ".";
        visit_adapter(*block.lora, [&](const char* n, Tensor& t) { out.push_back({prefix + n, &t}); });
    }
    return out;
}

LoRATaskResult finetune_task_lora(DTModel& pi, int n, const OfflineDataset& data, const LoRAConfig& cfg,
                                  const AdamConfig& adam, Rng& rng, const LoRAHook& hook) {
    cfg.validate(pi.config);
    if (data.trajectories.empty()) throw ConfigError("finetune_task_lora: empty dataset");
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    Rng data_rng = rng.child("data");
    Rng adapter_rng = rng.child("adapters");
    LoRATaskResult result;

    if (n == 0) {
        Adam opt(adam);
        for (int step = 0; step < cfg.steps_per_task; ++step) {
            const double loss = train_step_single(pi, sample_windows(data.trajectories, batch, pi.config, data_rng), opt);
            if (hook) hook({n, step, LoRAPhase::Full, loss}, pi, nullptr);
        }
        init_adapters(pi, cfg.rank, adapter_rng);
        freeze_base(pi);
        result.adapters = extract_adapters(pi, n);
        return result;
    }

    Rng teacher_init = rng.child("teacher");
    DTModel teacher = DTModel::init(pi.config, teacher_init);
    if (cfg.teacher_init == TeacherInit::Base) {
        teacher = pi;
        for (auto& block : teacher.trunk.blocks) block.lora.reset();
        visit_base(teacher, [](const std::string&, Tensor& t, bool) { t.set_frozen(false); });
    }
    Rng teacher_data = rng.child("teacher_data");
    const int teacher_steps = cfg.teacher_steps();
    {
        Adam opt(adam);
        for (int step = 0; step < teacher_steps; ++step) {
            const double loss =
                train_step_single(teacher, sample_windows(data.trajectories, batch, teacher.config, teacher_data), opt);
            if (hook) hook({n, step, LoRAPhase::Teacher, loss}, pi, &teacher);
        }
    }

    merge_weights(pi, teacher, cfg.merge_weight);
    init_adapters(pi, cfg.rank, adapter_rng);
    freeze_base(pi);

    Adam opt(adam);
    const ParamList trainable = adapter_parameters(pi);
    for (int step = teacher_steps; step < cfg.steps_per_task; ++step) {
        const auto windows = sample_windows(data.trajectories, batch, pi.config, data_rng);
        Tape tape;
        const Tensor& loss = prediction_loss(tape, pi.view(), windows);
        const double value = loss.item();
        if (!std::isfinite(value)) throw NumericError("non-finite LoRA loss at task " + std::to_string(n));
        tape.backward(loss);
        opt.step(trainable);
        if (hook) hook({n, step, LoRAPhase::Adapter, value}, pi, &teacher);
    }
    result.adapters = extract_adapters(pi, n);
    result.teacher = std::move(teacher);
    return result;
}

}  // namespace contdt
