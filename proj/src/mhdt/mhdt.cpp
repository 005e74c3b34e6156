#include "contdt/mhdt/mhdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "contdt/dt/train.hpp"
#include "contdt/errors.hpp"
#include "contdt/numerics/ops.hpp"

namespace contdt {

MultiHeadDT MultiHeadDT::init(const DTConfig& cfg, Rng& rng) {
    Rng trunk_rng = rng.child("trunk");
    return MultiHeadDT{cfg, init_trunk(cfg, trunk_rng), {}};
}

int MultiHeadDT::add_head(Rng& rng) {
    heads.push_back(init_head(config, rng));
    return head_count() - 1;
}

PolicyView MultiHeadDT::view(int task) const {
    if (task < 0 || task >= head_count())
        throw LookupError("no head for task " + std::to_string(task) + " (have " + std::to_string(head_count()) + ")");
    return {&config, &heads[static_cast<std::size_t>(task)], &trunk};
}

DTModel MultiHeadDT::assemble(int task) const {
    const PolicyView v = view(task);
    return DTModel{config, *v.head, trunk};
}

ParamList MultiHeadDT::parameters() {
    ParamList out = trunk_parameters(trunk, "trunk.");
    for (std::size_t i = 0; i < heads.size(); ++i) {
        for (auto& p : head_parameters(heads[i], "head" + std::to_string(i) + "."))
            out.push_back(std::move(p));
    }
    return out;
}

void MHDTConfig::validate() const {
    if (k_select < 0) throw ConfigError("k_select must be >= 0");
    if (select_period < 1) throw ConfigError("select_period must be >= 1");
    if (!(lambda_distill >= 0) || !(lambda_rehearsal >= 0)) throw ConfigError("loss weights must be >= 0");
    if (steps_per_task < 1) throw ConfigError("steps_per_task must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be >= 1");
}

double teacher_step(DTModel& teacher, std::span<const TrajectoryWindow> batch, Adam& opt) {
    return train_step_single(teacher, batch, opt);
}

void copy_head(const DTModel& teacher, MultiHeadDT& pi, int n) {
    (void)pi.view(n);
    auto& dst = pi.heads[static_cast<std::size_t>(n)];
    std::vector<const Tensor*> src;
    visit_head(teacher.head, [&](const std::string&, const Tensor& t) { src.push_back(&t); });
    std::size_t i = 0;
    visit_head(dst, [&](const std::string& name, Tensor& t) {
        const Tensor& s = *src[i++];
        if (s.shape() != t.shape()) throw ConfigError("copy_head: shape mismatch in " + name);
        std::copy(s.values().begin(), s.values().end(), t.values().begin());
    });
}

namespace {

std::vector<Scalar> valid_rows(const DTConfig& cfg, std::span<const TrajectoryWindow> windows) {
    const std::size_t k = cfg.context_len;
    std::vector<Scalar> w(windows.size() * k, Scalar{0});
    for (std::size_t b = 0; b < windows.size(); ++b)
        for (int t = 0; t < windows[b].valid_len; ++t) w[b * k + static_cast<std::size_t>(t)] = 1;
    return w;
}

}  // namespace

const Tensor& loss_distillation(Tape& tape, PolicyView student, PolicyView teacher,
                                std::span<const TrajectoryWindow> batch) {
    const auto out = forward(tape, student, batch);
    return loss_distillation(tape, out, student, teacher, batch);
}

const Tensor& loss_distillation(Tape& tape, const ForwardOutput& out, PolicyView student, PolicyView teacher,
                                std::span<const TrajectoryWindow> batch) {
    if (student.config->embed_dim != teacher.config->embed_dim ||
        student.config->action_dim != teacher.config->action_dim ||
        student.config->context_len != teacher.config->context_len)
        throw ConfigError("distillation needs matching hidden and action dimensions");
    Tensor target_pred, target_hidden;
    {
        Tape frozen(false);
        const auto out = forward(frozen, teacher, batch);
        target_pred = Tensor(out.pred_actions.shape(),
                             std::vector<Scalar>(out.pred_actions.values().begin(), out.pred_actions.values().end()));
        target_hidden =
            Tensor(out.hidden.shape(), std::vector<Scalar>(out.hidden.values().begin(), out.hidden.values().end()));
    }
    const auto weights = loss_row_weights(*student.config, batch);
    const Tensor& action_term = ops::masked_mse(tape, out.pred_actions, tape.hold(std::move(target_pred)), weights);
    const Tensor& hidden_term = ops::masked_mse(tape, out.hidden, tape.hold(std::move(target_hidden)), weights);
    return ops::add(tape, action_term, hidden_term);
}

std::vector<double> similarity_scores(const MultiHeadDT& pi, PolicyView teacher,
                                      std::span<const TrajectoryWindow> batch, int n) {
    if (n > pi.head_count()) throw LookupError("similarity_scores: fewer heads than previous tasks");
    const std::size_t h = pi.config.embed_dim;
    const auto rows = valid_rows(pi.config, batch);
    Tape teacher_tape(false);
    const Tensor& reference = forward(teacher_tape, teacher, batch).hidden;
    std::vector<double> scores;
    for (int j = 0; j < n; ++j) {
        Tape tape(false);
        const Tensor& hidden = forward(tape, pi.view(j), batch).hidden;
        double acc = 0;
        std::size_t count = 0;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r] == 0) continue;
            acc += ops::cosine_similarity(hidden.values().subspan(r * h, h), reference.values().subspan(r * h, h));
            ++count;
        }
        scores.push_back(count ? acc / static_cast<double>(count) : 0.0);
    }
    return scores;
}

SelectSet lowest_k(std::span<const double> scores, int k) {
    SelectSet order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
    });
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(k, 0))));
    return order;
}

SelectSet select_tasks(const MultiHeadDT& pi, PolicyView teacher, std::span<const TrajectoryWindow> batch, int n,
                       int k) {
    if (n < 1 || k < 1) return {};
    const auto scores = similarity_scores(pi, teacher, batch, n);
    return lowest_k(scores, k);
}

std::vector<RehearsalBatch> sample_rehearsal(const SelectSet& selected, std::span<const ReplayBuffer> buffers,
                                             std::size_t batch, const DTConfig& cfg, Rng& rng) {
    std::vector<RehearsalBatch> out;
    for (int s : selected) {
        const auto it = std::find_if(buffers.begin(), buffers.end(),
                                     [s](const ReplayBuffer& b) { return b.task_index == s; });
        if (it == buffers.end() || it->trajectories.empty())
            throw ConfigError("no replay buffer for task " + std::to_string(s));
        out.push_back({s, sample_windows(it->trajectories, batch, cfg, rng)});
    }
    return out;
}

const Tensor& loss_rehearsal(Tape& tape, const MultiHeadDT& pi, std::span<const RehearsalBatch> batches) {
    if (batches.empty()) return tape.hold(Tensor::scalar(0));
    std::vector<std::pair<const Tensor*, Scalar>> terms;
    const auto w = static_cast<Scalar>(1.0 / static_cast<double>(batches.size()));
    for (const auto& b : batches) terms.emplace_back(&prediction_loss(tape, pi.view(b.task), b.windows), w);
    return ops::weighted_sum(tape, terms);
}

const Tensor& total_loss(Tape& tape, const Tensor& predict, const Tensor* distill, const Tensor* rehearsal,
                         double lambda1, double lambda2) {
    std::vector<std::pair<const Tensor*, Scalar>> terms{{&predict, Scalar{1}}};
    if (distill) terms.emplace_back(distill, static_cast<Scalar>(lambda1));
    if (rehearsal) terms.emplace_back(rehearsal, static_cast<Scalar>(lambda2));
    return ops::weighted_sum(tape, terms);
}

MHDTTaskResult train_task_mhdt(MultiHeadDT& pi, int n, const OfflineDataset& data,
                               std::span<const ReplayBuffer> buffers, const MHDTConfig& cfg, Adam& opt, Rng& rng,
                               const MHDTHook& hook) {
    cfg.validate();
    if (n != pi.head_count()) throw ConfigError("train_task_mhdt: task " + std::to_string(n) + " but " +
                                                std::to_string(pi.head_count()) + " heads exist");
    if (data.trajectories.empty()) throw ConfigError("train_task_mhdt: empty dataset");

    Rng head_rng = rng.child("head");
    pi.add_head(head_rng);
    Rng teacher_init = rng.child("teacher");
    DTModel teacher = DTModel::init(pi.config, teacher_init);
    Adam teacher_opt(opt.config());
    Rng teacher_data = rng.child("teacher_data");
    Rng student_data = rng.child("data");
    Rng select_rng = rng.child("select");
    Rng rehearsal_rng = rng.child("rehearsal");

    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const bool distill = cfg.lambda_distill > 0;
    const bool rehearse = cfg.lambda_rehearsal > 0 && cfg.k_select > 0 && n > 0;
    SelectSet selected;

    for (int step = 0; step < cfg.steps_per_task; ++step) {
        MHDTStep info{n, step, &selected};
        info.teacher_loss = teacher_step(teacher, sample_windows(data.trajectories, batch, pi.config, teacher_data),
                                         teacher_opt);
        copy_head(teacher, pi, n);
        if (rehearse && step % cfg.select_period == 0) {
            const auto probe = sample_windows(data.trajectories, batch, pi.config, select_rng);
            selected = select_tasks(pi, teacher.view(), probe, n, cfg.k_select);
        }

        const auto windows = sample_windows(data.trajectories, batch, pi.config, student_data);
        Tape tape;
        const auto out = forward(tape, pi.view(n), windows);
        const Tensor& predict = prediction_loss(tape, out, pi.config, windows);
        const Tensor* distill_term =
            distill ? &loss_distillation(tape, out, pi.view(n), teacher.view(), windows) : nullptr;
        const Tensor* rehearsal_term = nullptr;
        if (rehearse && !selected.empty()) {
            const auto replay = sample_rehearsal(selected, buffers, batch, pi.config, rehearsal_rng);
            rehearsal_term = &loss_rehearsal(tape, pi, replay);
        }
        const Tensor& loss = total_loss(tape, predict, distill_term, rehearsal_term, cfg.lambda_distill,
                                        cfg.lambda_rehearsal);
        info.predict = predict.item();
        info.distill = distill_term ? distill_term->item() : 0.0;
        info.rehearsal = rehearsal_term ? rehearsal_term->item() : 0.0;
        info.total = loss.item();
        if (!std::isfinite(info.total))
            throw NumericError("non-finite MH-DT loss at task " + std::to_string(n) + " step " + std::to_string(step));
        tape.backward(loss);
        opt.step(pi.parameters());
        if (hook) hook(info, pi, teacher);
    }

    Rng buffer_rng = rng.child("buffer");
    return {std::move(teacher), build_replay_buffer(data, cfg.buffer_capacity, buffer_rng, n)};
}

RolloutResult evaluate_mhdt(const MultiHeadDT& pi, int task, const Environment& env, Scalar target_return,
                            int episodes, Rng& rng) {
    return rollout(pi.view(task), env, target_return, episodes, rng);
}

}  // namespace contdt
