// Finite-difference checks of every differentiable primitive and of the
// full DT loss. Built against the double-precision library: float32 central
// differences cannot resolve relative errors near 1e-4.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <type_traits>

#include "contdt/dt/model.hpp"
#include "contdt/dt/train.hpp"
#include "contdt/numerics/gradcheck.hpp"
#include "contdt/numerics/ops.hpp"
#include "contdt/tasks/dataset.hpp"

using namespace contdt;

static_assert(std::is_same_v<Scalar, double>, "gradient suite needs the double build");

namespace {

constexpr double kTol = 1e-4;
constexpr double kQuadraticTol = 1e-6;
constexpr double kStep = 1e-5;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.normal(0.0, scale);
    return t;
}

// Keeps entries at least `gap` away from zero, for kinked ops.
Tensor away_from_zero(Shape shape, Rng& rng, double gap = 0.05) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) {
        const double u = rng.uniform(gap, 1.5);
        v = rng.uniform() < 0.5 ? -u : u;
    }
    return t;
}

// Random projection to a scalar so every output element gets a distinct
// upstream gradient.
const Tensor& project(Tape& tape, const Tensor& out, const Tensor& target) { return ops::mse(tape, out, target); }

double check(const LossFn& loss, std::vector<Tensor*> inputs) {
    std::vector<Coordinate> coords;
    for (Tensor* t : inputs) {
        t->set_requires_grad(true);
        for (std::size_t i = 0; i < t->numel(); ++i) coords.push_back({t, i});
    }
    return finite_diff_check(loss, coords, kStep, 1e-10).max_rel_error;
}

}  // namespace

TEST_CASE("quadratic sum of squares") {
    Rng rng(1);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor zero({3, 4});
    const double err = check([&](Tape& t) -> const Tensor& { return ops::mse(t, x, zero); }, {&x});
    CHECK(err <= kQuadraticTol);
}

TEST_CASE("constant function has zero gradient both ways") {
    Rng rng(2);
    Tensor x = random_tensor({2, 3}, rng);
    Tensor c = Tensor::scalar(3.5);
    const auto r = finite_diff_check(
        [&](Tape& t) -> const Tensor& {
            (void)x;
            return ops::sum(t, c);
        },
        {{&x, 0}, {&x, 5}});
    for (double g : r.analytic) CHECK(g == 0.0);
    for (double g : r.numeric) CHECK(g == 0.0);
}

TEST_CASE("matmul") {
    Rng rng(3);
    Tensor a = random_tensor({3, 3}, rng), b = random_tensor({3, 3}, rng);
    SUBCASE("sum of product w.r.t. A") {
        CHECK(check([&](Tape& t) -> const Tensor& { return ops::sum(t, ops::matmul(t, a, b)); }, {&a}) <= kTol);
    }
    SUBCASE("rectangular, both operands") {
        Tensor x = random_tensor({4, 3}, rng), y = random_tensor({3, 5}, rng), target = random_tensor({4, 5}, rng);
        CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::matmul(t, x, y), target); }, {&x, &y}) <=
              kTol);
    }
}

TEST_CASE("linear with and without bias") {
    Rng rng(4);
    Tensor x = random_tensor({5, 3}, rng), w = random_tensor({4, 3}, rng), b = random_tensor({4}, rng);
    Tensor target = random_tensor({5, 4}, rng);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::linear(t, x, w, &b), target); },
                {&x, &w, &b}) <= kTol);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::linear(t, x, w, nullptr), target); },
                {&x, &w}) <= kTol);
}

TEST_CASE("elementwise ops") {
    Rng rng(5);
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), target = random_tensor({3, 4}, rng);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::add(t, a, b), target); }, {&a, &b}) <= kTol);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::scale(t, a, -1.7), target); }, {&a}) <= kTol);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::tanh(t, a), target); }, {&a}) <= kTol);
    Tensor kinked = away_from_zero({3, 4}, rng);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::relu(t, kinked), target); }, {&kinked}) <=
          kTol);
}

TEST_CASE("layernorm") {
    Rng rng(6);
    Tensor x = random_tensor({4, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    Tensor target = random_tensor({4, 6}, rng);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::layernorm(t, x, g, b), target); },
                {&x, &g, &b}) <= kTol);
}

TEST_CASE("causal softmax") {
    Rng rng(7);
    Tensor s = random_tensor({8, 4}, rng);  // two stacked 4x4 blocks
    Tensor target = random_tensor({8, 4}, rng, 0.3);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::softmax_causal(t, s, 4), target); }, {&s}) <=
          kTol);
}

TEST_CASE("block products") {
    Rng rng(8);
    Tensor a = random_tensor({6, 4}, rng), b = random_tensor({6, 4}, rng);
    Tensor target = random_tensor({6, 3}, rng);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::block_matmul_bt(t, a, b, 3, 0.5), target); },
                {&a, &b}) <= kTol);
    Tensor p = random_tensor({6, 3}, rng), v = random_tensor({6, 4}, rng);
    Tensor target2 = random_tensor({6, 4}, rng);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::block_matmul(t, p, v, 3), target2); },
                {&p, &v}) <= kTol);
}

TEST_CASE("row and column plumbing") {
    Rng rng(9);
    Tensor x = random_tensor({4, 5}, rng), y = random_tensor({2, 5}, rng), z = random_tensor({4, 2}, rng);
    SUBCASE("take_rows with repeats") {
        Tensor target = random_tensor({5, 5}, rng);
        CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::take_rows(t, x, {3, 0, 3, 1, 3}), target); },
                    {&x}) <= kTol);
    }
    SUBCASE("concat_rows") {
        Tensor target = random_tensor({6, 5}, rng);
        CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::concat_rows(t, {&x, &y}), target); },
                    {&x, &y}) <= kTol);
    }
    SUBCASE("slice_cols") {
        Tensor target = random_tensor({4, 3}, rng);
        CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::slice_cols(t, x, 1, 4), target); }, {&x}) <=
              kTol);
    }
    SUBCASE("concat_cols") {
        Tensor target = random_tensor({4, 7}, rng);
        CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::concat_cols(t, {&x, &z}), target); },
                    {&x, &z}) <= kTol);
    }
}

TEST_CASE("losses and reductions") {
    Rng rng(10);
    Tensor p = random_tensor({5, 3}, rng), q = random_tensor({5, 3}, rng);
    CHECK(check([&](Tape& t) -> const Tensor& { return ops::mse(t, p, q); }, {&p, &q}) <= kQuadraticTol);
    const std::vector<Scalar> rows{1, 0, 1, 1, 0};
    CHECK(check([&](Tape& t) -> const Tensor& { return ops::masked_mse(t, p, q, rows); }, {&p}) <= kQuadraticTol);
    Tensor target = Tensor::scalar(0.3);
    CHECK(check([&](Tape& t) -> const Tensor& { return project(t, ops::sum(t, ops::tanh(t, p)), target); }, {&p}) <=
          kTol);
    Tensor anchor = random_tensor({5, 3}, rng), weight = random_tensor({5, 3}, rng);
    for (auto& w : weight.values()) w = std::abs(w);
    CHECK(check([&](Tape& t) -> const Tensor& { return ops::weighted_sq_diff(t, p, anchor, weight); }, {&p}) <=
          kQuadraticTol);
    Tensor u = random_tensor({2, 2}, rng), v = random_tensor({3, 1}, rng);
    CHECK(check(
              [&](Tape& t) -> const Tensor& {
                  const Tensor& lu = ops::sum(t, ops::tanh(t, u));
                  const Tensor& lv = ops::sum(t, ops::tanh(t, v));
                  return ops::weighted_sum(t, {{&lu, 0.7}, {&lv, -2.0}});
              },
              {&u, &v}) <= kTol);
}

namespace {

DTConfig small_dt() {
    DTConfig cfg;
    cfg.context_len = 4;
    cfg.n_layers = 2;
    cfg.embed_dim = 8;
    cfg.mlp_dim = 6;
    cfg.max_timestep = 20;
    return cfg;
}

std::vector<TrajectoryWindow> small_batch(const DTConfig& cfg, Rng& rng) {
    TaskSpec task;
    task.horizon = 20;
    const auto data = generate_dataset(task, Quality::Middle, 4, 11);
    return sample_windows(data.trajectories, 3, cfg, rng);
}

// Every parameter tensor, a few coordinates each.
std::vector<Coordinate> sample_coords(const ParamList& params, Rng& rng, std::size_t per_tensor) {
    std::vector<Coordinate> coords;
    for (const auto& p : params)
        for (std::size_t i = 0; i < per_tensor; ++i) coords.push_back({p.tensor, rng.below(p.tensor->numel())});
    return coords;
}

}  // namespace

TEST_CASE("full DT loss") {
    const DTConfig cfg = small_dt();
    Rng rng(12);
    DTModel model = DTModel::init(cfg, rng);
    // Scale the action head up so the tanh squashing is exercised.
    for (auto& v : model.head.out_weight.values()) v *= 20;
    const auto batch = small_batch(cfg, rng);
    const auto params = model.parameters();
    for (const auto& p : params) p.tensor->set_requires_grad(true);
    const auto coords = sample_coords(params, rng, 3);
    const auto r = finite_diff_check(
        [&](Tape& t) -> const Tensor& { return prediction_loss(t, model.view(), batch); }, coords, kStep, 1e-10);
    INFO("worst coordinate " << r.worst_index << " analytic " << r.analytic[r.worst_index] << " numeric "
                             << r.numeric[r.worst_index]);
    CHECK(r.max_rel_error <= kTol);
    std::size_t nonzero = 0;
    for (double g : r.analytic) nonzero += std::abs(g) > 1e-8;
    CHECK(nonzero * 10 >= coords.size() * 9);
}

TEST_CASE("full DT loss, last position only") {
    DTConfig cfg = small_dt();
    cfg.loss_positions = LossPositions::Last;
    Rng rng(13);
    DTModel model = DTModel::init(cfg, rng);
    const auto batch = small_batch(cfg, rng);
    const auto params = model.parameters();
    for (const auto& p : params) p.tensor->set_requires_grad(true);
    const auto coords = sample_coords(params, rng, 2);
    const auto r = finite_diff_check(
        [&](Tape& t) -> const Tensor& { return prediction_loss(t, model.view(), batch); }, coords, kStep, 1e-10);
    CHECK(r.max_rel_error <= kTol);
}

TEST_CASE("adapter matrices of a block MLP") {
    const DTConfig cfg = small_dt();
    Rng rng(14);
    Trunk trunk = init_trunk(cfg, rng);
    BlockParams& block = trunk.blocks[0];
    const std::size_t r = 3, h = cfg.embed_dim, d = cfg.mlp_dim;
    // Non-zero B so every adapter matrix has a gradient path.
    block.lora = LoRAAdapter{random_tensor({r, h}, rng, 0.3), random_tensor({d, r}, rng, 0.3),
                             random_tensor({r, d}, rng, 0.3), random_tensor({h, r}, rng, 0.3)};
    Tensor x = random_tensor({5, h}, rng), target = random_tensor({5, h}, rng);
    auto loss = [&](Tape& t) -> const Tensor& { return project(t, mlp_forward(t, x, block), target); };
    CHECK(check(loss, {&block.lora->a0}) <= kTol);
    CHECK(check(loss, {&block.lora->b0, &block.lora->a1, &block.lora->b1}) <= kTol);
}

TEST_CASE("adapter A0 with zero-initialised B") {
    const DTConfig cfg = small_dt();
    Rng rng(15);
    Trunk trunk = init_trunk(cfg, rng);
    BlockParams& block = trunk.blocks[0];
    const std::size_t r = 2, h = cfg.embed_dim, d = cfg.mlp_dim;
    block.lora = LoRAAdapter{random_tensor({r, h}, rng, 0.02), Tensor({d, r}), random_tensor({r, d}, rng, 0.02),
                             Tensor({h, r})};
    Tensor x = random_tensor({5, h}, rng), target = random_tensor({5, h}, rng);
    auto loss = [&](Tape& t) -> const Tensor& { return project(t, mlp_forward(t, x, block), target); };
    block.lora->a0.set_requires_grad(true);
    block.lora->b0.set_requires_grad(true);
    // With B = 0 the A gradient is exactly zero; B's is not.
    const auto res = finite_diff_check(loss, {{&block.lora->a0, 0}, {&block.lora->b0, 0}}, kStep, 1e-10);
    CHECK(res.max_rel_error <= kTol);
    CHECK(res.analytic[0] == 0.0);
    CHECK(res.analytic[1] != 0.0);
}
