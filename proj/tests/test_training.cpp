#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "findnet/checkpoint.hpp"
#include "findnet/ctsim.hpp"
#include "findnet/training.hpp"

using namespace findnet;
using namespace findnet::training;
using findnet::config::GenerateConfig;

namespace {

model::StageTrace manual_trace(Tape& t, const std::vector<Tensor>& xs, const std::vector<Tensor>& as,
                               const std::vector<Tensor>& ms) {
    model::StageTrace tr;
    tr.tape = &t;
    for (const Tensor& x : xs) tr.x_nodes.push_back(t.constant(x));
    for (const Tensor& a : as) tr.a_nodes.push_back(t.constant(a));
    for (const Tensor& m : ms) tr.m_nodes.push_back(t.constant(m));
    return tr;
}

std::vector<CTSample> tiny_split(uint64_t seed, int64_t n, GenerateConfig* cfg_out = nullptr) {
    GenerateConfig cfg;
    cfg.seed = seed;
    cfg.geometry = {32, 32, 48, 48, 1.0};
    cfg.n_ellipses = 3;
    cfg.metal = {1, 1.5, 4.0};
    cfg.train = n;
    cfg.val = 0;
    cfg.test = 0;
    cfg.validate();
    if (cfg_out) *cfg_out = cfg;
    std::vector<CTSample> out;
    uint64_t s = seed;
    while (static_cast<int64_t>(out.size()) < n) {
        try {
            out.push_back(ctsim::make_sample(s, cfg, "s" + std::to_string(s)));
        } catch (const GenError&) {
        }
        ++s;
    }
    return out;
}

model::ModelConfig tiny_model_config() {
    model::ModelConfig mc;
    mc.stages = 1;
    mc.n_kernels = 2;
    mc.ksize = 3;
    mc.depth = 1;
    mc.width = 4;
    return mc;
}

}  // namespace


TEST_CASE("loss_total hand value on a single pixel", "[training]") {
    // S=1, I=1, omega=[1,1], gamma1=gamma2=1, X_gt=0, X0=X1=2, Y=3, A1=1
    Tape t;
    Tensor two = Tensor::full({1, 1, 1}, 2.0), one = Tensor::full({1, 1, 1}, 1.0);
    model::StageTrace tr = manual_trace(t, {two, two}, {one}, {two, two});
    CTSample s;
    s.id = "hand";
    s.Y = Tensor::full({1, 1, 1}, 3.0);
    s.X_gt = Tensor({1, 1, 1});
    s.X0 = two;
    s.I = Tensor::ones({1, 1, 1});
    LossWeights w;
    w.omega = {1.0, 1.0};
    w.gamma1 = 1.0;
    w.gamma2 = 1.0;
    CHECK(t.value(loss_total(t, tr, s, w))[0] == 14.0);
}

TEST_CASE("loss_total is zero exactly on perfect traces and fully masked inputs", "[training]") {
    Rng rng(701);
    Tensor xgt = rng.normal_tensor({1, 4, 4});
    Tensor y = rng.normal_tensor({1, 4, 4});
    CTSample s;
    s.id = "p";
    s.Y = y;
    s.X_gt = xgt;
    s.X0 = xgt;
    s.I = Tensor::ones({1, 4, 4});
    LossWeights w = LossWeights::defaults(1);

    Tape t;
    model::StageTrace perfect = manual_trace(t, {xgt, xgt}, {y - xgt}, {xgt, xgt});
    CHECK(t.value(loss_total(t, perfect, s, w))[0] == 0.0);

    // arbitrary trace, empty mask
    model::StageTrace junk = manual_trace(t, {y, y}, {y}, {y, y});
    CTSample masked = s;
    masked.I = Tensor({1, 4, 4});
    CHECK(t.value(loss_total(t, junk, masked, w))[0] == 0.0);

    // nonnegative in general
    CHECK(t.value(loss_total(t, junk, s, w))[0] > 0.0);
}

TEST_CASE("loss_total scales linearly in omega", "[training]") {
    Rng rng(702);
    Tape t;
    Tensor x0 = rng.normal_tensor({1, 4, 4}), x1 = rng.normal_tensor({1, 4, 4});
    Tensor a1 = rng.normal_tensor({1, 4, 4});
    CTSample s;
    s.id = "w";
    s.Y = rng.normal_tensor({1, 4, 4});
    s.X_gt = rng.normal_tensor({1, 4, 4});
    s.X0 = x0;
    s.I = Tensor::ones({1, 4, 4});
    LossWeights w = LossWeights::defaults(1);
    model::StageTrace tr = manual_trace(t, {x0, x1}, {a1}, {x0, x1});
    const double base = t.value(loss_total(t, tr, s, w))[0];
    LossWeights w4 = w;
    for (double& o : w4.omega) o *= 4.0;
    CHECK(t.value(loss_total(t, tr, s, w4))[0] == Catch::Approx(4.0 * base).epsilon(1e-12));
}

TEST_CASE("adamw stationary and decay behavior", "[training]") {
    Parameter p("p", Tensor({4}, {1.0, -2.0, 0.5, 3.0}));
    std::vector<Parameter*> ps{&p};
    OptimizerConfig cfg;
    cfg.weight_decay = 0.0;
    OptimizerState st(cfg, ps);

    SECTION("zero gradient and zero weight decay leave parameters unchanged") {
        Tensor before = p.value;
        CHECK(adamw_step(ps, st, 1e-3));
        CHECK(bit_equal(p.value, before));
    }
    SECTION("first step moves by -lr * g/(|g|+eps) elementwise") {
        p.grad = Tensor({4}, {0.3, -0.7, 1.9, -0.001});
        Tensor before = p.value;
        const double lr = 1e-2;
        CHECK(adamw_step(ps, st, lr));
        for (int64_t i = 0; i < 4; ++i) {
            const double g = p.grad[i];
            const double want = before[i] - lr * g / (std::fabs(g) + cfg.eps);
            CHECK(p.value[i] == Catch::Approx(want).epsilon(1e-12));
        }
    }
    SECTION("pure weight decay shrinks parameters by (1 - lr*wd)") {
        OptimizerConfig wd_cfg;
        wd_cfg.weight_decay = 1e-5;
        OptimizerState st2(wd_cfg, ps);
        Tensor before = p.value;
        CHECK(adamw_step(ps, st2, 1e-2));
        for (int64_t i = 0; i < 4; ++i)
            CHECK(p.value[i] == Catch::Approx(before[i] * (1.0 - 1e-2 * 1e-5)).epsilon(1e-14));
    }
    SECTION("non-finite gradients reject the step") {
        p.grad[2] = std::numeric_limits<double>::quiet_NaN();
        Tensor before = p.value;
        CHECK(!adamw_step(ps, st, 1e-3));
        CHECK(bit_equal(p.value, before));
        CHECK(st.step_count == 0);
        CHECK(st.rejected_steps == 1);
    }
}

TEST_CASE("first-step adamw direction is invariant to gradient scaling", "[training]") {
    Rng rng(703);
    Tensor g = rng.normal_tensor({32});
    for (int64_t i = 0; i < g.numel(); ++i)
        if (std::fabs(g[i]) < 1e-3) g[i] = 1e-3;  // keep |g| >> eps
    Parameter a("a", Tensor::zeros({32})), b("b", Tensor::zeros({32}));
    a.grad = g;
    b.grad = 10.0 * g;
    OptimizerConfig cfg;
    cfg.weight_decay = 0.0;
    OptimizerState sa(cfg, {&a}), sb(cfg, {&b});
    adamw_step({&a}, sa, 1e-2);
    adamw_step({&b}, sb, 1e-2);
    for (int64_t i = 0; i < 32; ++i) CHECK(a.value[i] == Catch::Approx(b.value[i]).epsilon(1e-4));
}

TEST_CASE("gradient clipping caps the global norm", "[training]") {
    Parameter p("p", Tensor::zeros({3}));
    p.grad = Tensor({3}, {3.0, 4.0, 0.0});  // norm 5
    CHECK(clip_global_norm({&p}, 1.0) == Catch::Approx(5.0));
    CHECK(std::sqrt(dot(p.grad, p.grad)) == Catch::Approx(1.0).epsilon(1e-12));
    // below the cap: untouched
    Parameter q("q", Tensor::zeros({2}));
    q.grad = Tensor({2}, {0.3, 0.4});
    clip_global_norm({&q}, 1.0);
    CHECK(q.grad[0] == 0.3);
}

TEST_CASE("lr schedule: warmup, apex, cosine, floor", "[training]") {
    ScheduleConfig cfg;
    cfg.warmup_steps = 10;
    cfg.total_steps = 110;
    cfg.min_lr_fraction = 0.0;
    const double base = 3e-4;
    CHECK(lr_at(0, cfg, base) == Catch::Approx(base * 0.1).epsilon(1e-14));
    CHECK(lr_at(4, cfg, base) == Catch::Approx(base * 0.5).epsilon(1e-14));
    CHECK(lr_at(10, cfg, base) == base);                        // apex, exact
    CHECK(lr_at(60, cfg, base) == Catch::Approx(base / 2).epsilon(1e-12));  // cosine midpoint
    CHECK(lr_at(110, cfg, base) == 0.0);                        // annealing floor
    CHECK(lr_at(500, cfg, base) == 0.0);

    ScheduleConfig floor_cfg = cfg;
    floor_cfg.min_lr_fraction = 0.1;
    CHECK(lr_at(110, floor_cfg, base) == Catch::Approx(0.1 * base));
    CHECK_THROWS_AS(lr_at(-1, cfg, base), ContractError);
    ScheduleConfig bad;
    bad.warmup_steps = 5;
    bad.total_steps = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fit early-stopping contract and history bookkeeping", "[training]") {
    std::vector<CTSample> train = tiny_split(900, 4);
    std::vector<CTSample> val = tiny_split(950, 2);
    Rng rng(704);
    model::FindNetParams params(tiny_model_config(), rng);

    TrainSettings settings;
    settings.seed = 5;
    settings.epochs = 6;
    settings.patience = 1;
    settings.min_delta = 1e18;  // no improvement can ever register after epoch 1
    settings.optimizer.lr = 1e-4;
    settings.loss = LossWeights::defaults(1);

    FitResult res = fit(train, val, params, settings);
    // epoch 1 improves from +inf, epoch 2 fails to improve, patience 1 stops
    REQUIRE(res.history.rows.size() == 2);
    CHECK(res.best_epoch == 1);
    CHECK(res.history.rows[0].epoch == 1);
    CHECK(res.history.rows[1].epoch == 2);
    CHECK(res.history.rows[0].step == 4);
    CHECK(res.history.rows[1].step == 8);
    CHECK(res.best_val == res.history.rows[0].val_loss);

    // recorded lr matches lr_at exactly
    ScheduleConfig sched;
    sched.total_steps = 6 * 4;
    for (const auto& row : res.history.rows)
        CHECK(row.lr == lr_at(row.step - 1, sched, settings.optimizer.lr));
}

TEST_CASE("fit is reproducible for identical seeds", "[training]") {
    std::vector<CTSample> train = tiny_split(901, 3);
    std::vector<CTSample> val = tiny_split(951, 2);
    TrainSettings settings;
    settings.seed = 9;
    settings.epochs = 2;
    settings.patience = 10;
    settings.optimizer.lr = 1e-4;
    settings.loss = LossWeights::defaults(1);

    Rng r1(42), r2(42);
    model::FindNetParams p1(tiny_model_config(), r1), p2(tiny_model_config(), r2);
    FitResult a = fit(train, val, p1, settings);
    FitResult b = fit(train, val, p2, settings);
    REQUIRE(a.history.rows.size() == b.history.rows.size());
    for (size_t i = 0; i < a.history.rows.size(); ++i) {
        CHECK(a.history.rows[i].train_loss == b.history.rows[i].train_loss);
        CHECK(a.history.rows[i].val_loss == b.history.rows[i].val_loss);
        CHECK(a.history.rows[i].lr == b.history.rows[i].lr);
    }
    CHECK(checkpoint::history_csv(a.history) == checkpoint::history_csv(b.history));
}

TEST_CASE("interrupted training resumes with an identical history tail", "[training]") {
    namespace fs = std::filesystem;
    std::vector<CTSample> train = tiny_split(902, 3);
    std::vector<CTSample> val = tiny_split(952, 2);
    TrainSettings settings;
    settings.seed = 13;
    settings.epochs = 4;
    settings.patience = 10;
    settings.optimizer.lr = 1e-4;
    settings.loss = LossWeights::defaults(1);

    // uninterrupted reference
    Rng r1(77);
    model::FindNetParams ref(tiny_model_config(), r1);
    FitResult full = fit(train, val, ref, settings);

    // stop after epoch 2, save, reload, resume
    Rng r2(77);
    model::FindNetParams p(tiny_model_config(), r2);
    TrainSettings first = settings;
    first.stop_after_epoch = 2;
    const fs::path dir = fs::temp_directory_path() / "findnet_resume_test";
    fs::remove_all(dir);
    FitCarry last_carry;
    fit(train, val, p, first, nullptr, [&](const model::FindNetParams& cur, const FitCarry& c) {
        model::FindNetParams snapshot = cur;
        FitCarry state = c;
        checkpoint::save_train_state(dir, snapshot, state);
    });

    model::FindNetParams resumed;
    FitCarry carry;
    checkpoint::load_train_state(dir, resumed, carry, settings.optimizer);
    CHECK(carry.next_epoch == 3);
    FitResult tail = fit(train, val, resumed, settings, &carry);

    REQUIRE(tail.history.rows.size() == full.history.rows.size());
    CHECK(checkpoint::history_csv(tail.history) == checkpoint::history_csv(full.history));
    CHECK(tail.best_val == full.best_val);
    fs::remove_all(dir);
}
