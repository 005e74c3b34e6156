#include "contdt/baselines/baselines.hpp"

#include <cmath>

#include "contdt/dt/train.hpp"
#include "contdt/errors.hpp"
#include "contdt/numerics/ops.hpp"

namespace contdt {

void BaselineConfig::validate() const {
    if (steps_per_task < 1) throw ConfigError("steps_per_task must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(ewc_lambda >= 0)) throw ConfigError("ewc_lambda must be >= 0");
    if (fisher_batches < 1) throw ConfigError("fisher_batches must be >= 1");
    if (!(si_c >= 0)) throw ConfigError("si_c must be >= 0");
    if (!(si_xi > 0)) throw ConfigError("si_xi must be > 0");
}

double BaselineConfig::penalty_weight() const {
    switch (kind) {
        case Regularizer::EWC: return ewc_lambda;
        case Regularizer::SI: return si_c;
        case Regularizer::None: break;
    }
    return 0.0;
}

namespace {

std::vector<Scalar> copy_values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor constant_like(const Tensor& t, std::vector<Scalar> values) { return Tensor(t.shape(), std::move(values)); }

}  // namespace

ImportanceMap estimate_fisher(DTModel& model, std::span<const Trajectory> data, int batches, std::size_t batch_size,
                              Rng& rng) {
    const ParamList params = model.parameters();
    clear_grads(params);
    std::map<std::string, std::vector<double>> sums;
    for (const auto& p : params) sums[p.name].assign(p.tensor->numel(), 0.0);
    for (int b = 0; b < batches; ++b) {
        const auto windows = sample_windows(data, batch_size, model.config, rng);
        Tape tape;
        tape.backward(prediction_loss(tape, model.view(), windows));
        for (const auto& p : params) {
            if (!p.tensor->has_grad()) continue;
            auto& s = sums[p.name];
            const auto g = p.tensor->grad();
            for (std::size_t i = 0; i < g.size(); ++i) s[i] += static_cast<double>(g[i]) * g[i];
        }
        clear_grads(params);
    }
    ImportanceMap map;
    for (const auto& p : params) {
        std::vector<Scalar> f(p.tensor->numel());
        const auto& s = sums[p.name];
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<Scalar>(s[i] / batches);
        map.importance.emplace(p.name, constant_like(*p.tensor, std::move(f)));
        map.anchor.emplace(p.name, constant_like(*p.tensor, copy_values(*p.tensor)));
    }
    return map;
}

const Tensor& importance_penalty(Tape& tape, const ParamList& params, std::span<const ImportanceMap> maps,
                                 double lambda) {
    std::vector<std::pair<const Tensor*, Scalar>> terms;
    const auto w = static_cast<Scalar>(lambda);
    for (const auto& map : maps) {
        for (const auto& p : params) {
            const auto imp = map.importance.find(p.name);
            const auto anchor = map.anchor.find(p.name);
            if (imp == map.importance.end() || anchor == map.anchor.end()) continue;
            terms.emplace_back(&ops::weighted_sq_diff(tape, *p.tensor, anchor->second, imp->second), w);
        }
    }
    if (terms.empty()) return tape.hold(Tensor::scalar(0));
    return ops::weighted_sum(tape, terms);
}

void SITracker::begin_task(const ParamList& params) {
    omega_.clear();
    start_.clear();
    for (const auto& p : params) {
        omega_[p.name].assign(p.tensor->numel(), Scalar{0});
        start_[p.name] = copy_values(*p.tensor);
    }
}

void SITracker::record(const std::map<std::string, std::vector<Scalar>>& grads,
                       const std::map<std::string, std::vector<Scalar>>& before, const ParamList& params) {
    for (const auto& p : params) {
        const auto g = grads.find(p.name);
        const auto b = before.find(p.name);
        if (g == grads.end() || b == before.end()) continue;
        auto& w = omega_[p.name];
        w.resize(p.tensor->numel(), Scalar{0});
        const auto now = p.tensor->values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= g->second[i] * (now[i] - b->second[i]);
    }
}

void SITracker::end_task(const ParamList& params, double xi) {
    const auto x = static_cast<Scalar>(xi);
    for (const auto& p : params) {
        const auto now = p.tensor->values();
        const auto& start = start_.at(p.name);
        const auto& w = omega_.at(p.name);
        auto it = total_.importance.find(p.name);
        if (it == total_.importance.end())
            it = total_.importance.emplace(p.name, Tensor(p.tensor->shape())).first;
        auto big = it->second.values();
        for (std::size_t i = 0; i < big.size(); ++i) {
            const Scalar d = now[i] - start[i];
            big[i] += w[i] / (d * d + x);
        }
        total_.anchor.insert_or_assign(p.name, constant_like(*p.tensor, copy_values(*p.tensor)));
    }
}

void train_task_baseline(BaselineState& state, int n, const OfflineDataset& data, const BaselineConfig& cfg, Rng& rng,
                         const BaselineHook& hook) {
    cfg.validate();
    if (data.trajectories.empty()) throw ConfigError("train_task_baseline: empty dataset");
    DTModel& model = state.model;
    const ParamList params = model.parameters();
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const bool si = cfg.kind == Regularizer::SI;
    const double weight = cfg.penalty_weight();
    std::vector<ImportanceMap> si_maps;
    if (si && !state.si.importance().importance.empty()) si_maps.push_back(state.si.importance());
    const std::span<const ImportanceMap> maps = si ? std::span<const ImportanceMap>(si_maps)
                                                   : std::span<const ImportanceMap>(state.ewc_maps);
    const bool penalise = weight > 0 && !maps.empty();
    if (si) state.si.begin_task(params);

    Rng data_rng = rng.child("data");
    for (int step = 0; step < cfg.steps_per_task; ++step) {
        const auto windows = sample_windows(data.trajectories, batch, model.config, data_rng);
        Tape tape;
        const Tensor& loss = prediction_loss(tape, model.view(), windows);
        const double value = loss.item();
        if (!std::isfinite(value)) throw NumericError("non-finite loss at task " + std::to_string(n));
        tape.backward(loss);

        std::map<std::string, std::vector<Scalar>> grads, before;
        if (si) {
            for (const auto& p : params) {
                if (!p.tensor->has_grad()) continue;
                grads[p.name] = {p.tensor->grad().begin(), p.tensor->grad().end()};
                before[p.name] = copy_values(*p.tensor);
            }
        }
        if (penalise) {
            Tape reg;
            reg.backward(importance_penalty(reg, params, maps, weight));
        }
        state.opt.step(params);
        if (si) state.si.record(grads, before, params);
        if (hook) hook(n, step, value, model);
    }

    if (cfg.kind == Regularizer::EWC) {
        Rng fisher_rng = rng.child("fisher");
        state.ewc_maps.push_back(estimate_fisher(model, data.trajectories, cfg.fisher_batches, batch, fisher_rng));
    } else if (si) {
        state.si.end_task(params, cfg.si_xi);
    }
}

void train_vanilla_sequential(BaselineState& state, std::span<const OfflineDataset> datasets,
                              const BaselineConfig& cfg, Rng& rng, const BaselineHook& hook) {
    if (datasets.empty()) throw ConfigError("train_vanilla_sequential: no datasets");
    for (std::size_t n = 0; n < datasets.size(); ++n) {
        Rng task_rng = rng.child(n);
        train_task_baseline(state, static_cast<int>(n), datasets[n], cfg, task_rng, hook);
    }
}

}  // namespace contdt
