#pragma once

#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "findnet/gradcheck.hpp"
#include "findnet/model.hpp"

namespace findnet {
namespace training {

// ---------------------------------------------------------------------------
// Multi-term stage-supervised loss
// ---------------------------------------------------------------------------

// omega holds the per-stage weights (length S+1, stages 0..S);
// gamma1 weights the L1 image term, gamma2 the artifact-consistency term.
struct LossWeights {
    std::vector<double> omega;
    double gamma1 = 5e-4;
    double gamma2 = 5e-4;

    static LossWeights defaults(int64_t n_stages) {
        LossWeights w;
        w.omega.assign(static_cast<size_t>(n_stages + 1), 0.1);
        w.omega.back() = 1.0;
        return w;
    }

    void validate(int64_t n_stages) const {
        if (static_cast<int64_t>(omega.size()) != n_stages + 1)
            throw ConfigError("loss.omega must have S+1 entries, got " + std::to_string(omega.size()));
        for (double v : omega)
            if (v < 0.0) throw ConfigError("loss.omega entries must be >= 0");
        if (omega.back() <= 0.0) throw ConfigError("loss.omega final entry must be > 0");
        if (gamma1 < 0.0 || gamma2 < 0.0) throw ConfigError("loss.gamma weights must be >= 0");
    }
};

//   sum_s  w_s ||I.(Xgt - X_s)||_F^2
// + g1 sum_s w_s ||I.(Xgt - X_s)||_1
// + g2 sum_{s>=1} w_s ||I.(Y - Xgt - A_s)||_1
// Norms are sums over pixels, not means.
inline NodeId loss_total(Tape& t, const model::StageTrace& trace, const CTSample& sample,
                         const LossWeights& w) {
    const int64_t S = trace.n_stages();
    w.validate(S);
    require_same_shape(trace.x(0), sample.X_gt, "loss_total");

    NodeId loss = t.constant(Tensor::scalar(0.0));
    for (int64_t s = 0; s <= S; ++s) {
        if (w.omega[static_cast<size_t>(s)] == 0.0) continue;
        NodeId d = mul_const(t, sub(t, t.constant(sample.X_gt), trace.x_node(s)), sample.I);
        NodeId l2 = sum_all(t, square(t, d));
        loss = add(t, loss, scale(t, l2, w.omega[static_cast<size_t>(s)]));
        if (w.gamma1 != 0.0) {
            NodeId l1 = sum_all(t, abs_val(t, d));
            loss = add(t, loss, scale(t, l1, w.gamma1 * w.omega[static_cast<size_t>(s)]));
        }
    }
    if (w.gamma2 != 0.0) {
        Tensor target = sample.Y - sample.X_gt;  // the true artifact field off metal
        for (int64_t s = 1; s <= S; ++s) {
            if (w.omega[static_cast<size_t>(s)] == 0.0) continue;
            NodeId r = mul_const(t, sub(t, t.constant(target), trace.a_node(s)), sample.I);
            loss = add(t, loss, scale(t, sum_all(t, abs_val(t, r)), w.gamma2 * w.omega[static_cast<size_t>(s)]));
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay
// ---------------------------------------------------------------------------

struct OptimizerConfig {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 10.0;  // global-norm gradient clip; <= 0 disables
};

struct OptimizerState {
    OptimizerConfig cfg;
    int64_t step_count = 0;
    int64_t rejected_steps = 0;
    std::vector<Tensor> m, v;  // first/second moments, parallel to the param list

    OptimizerState() = default;
    OptimizerState(const OptimizerConfig& c, const std::vector<Parameter*>& params) : cfg(c) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const Parameter* p : params) {
            m.push_back(Tensor::zeros(p->value.shape()));
            v.push_back(Tensor::zeros(p->value.shape()));
        }
    }
};

// Scales all grads so the global L2 norm is at most max_norm. Returns the
// pre-clip norm.
inline double clip_global_norm(const std::vector<Parameter*>& params, double max_norm) {
    double sq = 0.0;
    for (const Parameter* p : params)
        for (int64_t i = 0; i < p->grad.numel(); ++i) sq += p->grad[i] * p->grad[i];
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
        const double s = max_norm / norm;
        for (Parameter* p : params)
            for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= s;
    }
    return norm;
}

// One bias-corrected AdamW update:
//   p <- p - lr * (mhat / (sqrt(vhat) + eps) + wd * p).
// A non-finite gradient rejects the whole step (params and moments
// untouched); the caller keeps training with clipping engaged.
inline bool adamw_step(const std::vector<Parameter*>& params, OptimizerState& st, double lr) {
    if (lr <= 0.0) throw ContractError("adamw_step: lr must be positive");
    if (params.size() != st.m.size()) throw ContractError("adamw_step: state does not match parameter list");
    for (const Parameter* p : params)
        if (!p->grad.all_finite()) {
            ++st.rejected_steps;
            return false;
        }

    ++st.step_count;
    const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step_count));
    for (size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        Tensor &mk = st.m[k], &vk = st.v[k];
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            const double g = p.grad[i];
            mk[i] = b1 * mk[i] + (1.0 - b1) * g;
            vk[i] = b2 * vk[i] + (1.0 - b2) * g * g;
            const double mhat = mk[i] / bc1;
            const double vhat = vk[i] / bc2;
            p.value[i] -= lr * (mhat / (std::sqrt(vhat) + st.cfg.eps) + st.cfg.weight_decay * p.value[i]);
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Learning-rate schedule: linear warmup, then cosine annealing
// ---------------------------------------------------------------------------

struct ScheduleConfig {
    int64_t warmup_steps = 0;
    int64_t total_steps = 0;
    double min_lr_fraction = 0.0;

    void validate() const {
        if (warmup_steps < 0 || total_steps <= warmup_steps)
            throw ConfigError("schedule: need 0 <= warmup_steps < total_steps");
        if (min_lr_fraction < 0.0 || min_lr_fraction > 1.0)
            throw ConfigError("schedule: min_lr_fraction must be in [0,1]");
    }
};

inline double lr_at(int64_t step, const ScheduleConfig& cfg, double base_lr) {
    if (step < 0) throw ContractError("lr_at: step must be >= 0");
    if (step < cfg.warmup_steps)
        return base_lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
    if (step == cfg.warmup_steps) return base_lr;  // warmup apex, exactly base_lr
    if (step >= cfg.total_steps) return cfg.min_lr_fraction * base_lr;
    const double pi = 3.14159265358979323846264338327950288;
    const double t = static_cast<double>(step - cfg.warmup_steps) /
                     static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    return base_lr * (cfg.min_lr_fraction + (1.0 - cfg.min_lr_fraction) * 0.5 * (1.0 + std::cos(pi * t)));
}

// ---------------------------------------------------------------------------
// Training loop with early stopping
// ---------------------------------------------------------------------------

struct TrainSettings {
    uint64_t seed = 0;
    int64_t epochs = 50;
    int64_t patience = 10;
    double min_delta = 1e-6;
    OptimizerConfig optimizer;
    ScheduleConfig schedule;  // total_steps 0 = epochs * n_train
    LossWeights loss;
    bool verbose = false;
    // Stop (but do not finish) after this epoch; 0 = off. The lr schedule is
    // still laid out over the full `epochs`, so a resumed run continues it.
    int64_t stop_after_epoch = 0;
};

struct HistoryRow {
    int64_t epoch = 0;       // 1-based
    int64_t step = 0;        // optimizer calls completed at the end of the epoch
    double train_loss = 0.0; // mean per-sample training loss of the epoch
    double val_loss = 0.0;
    double lr = 0.0;         // lr_at(step-1): the rate used by the epoch's last step
};

struct History {
    std::vector<HistoryRow> rows;
    std::vector<double> step_losses;  // per-step training losses, in order
};

struct FitResult {
    model::FindNetParams best;
    double best_val = std::numeric_limits<double>::infinity();
    int64_t best_epoch = 0;
    History history;
};

// State carried across an interrupted run; everything needed so that a
// resumed fit reproduces the uninterrupted history tail exactly.
struct FitCarry {
    OptimizerState opt;
    int64_t next_epoch = 1;
    int64_t steps_done = 0;
    double best_val = std::numeric_limits<double>::infinity();
    int64_t best_epoch = 0;
    int64_t bad_epochs = 0;
    History history;
    model::FindNetParams best;
};

inline std::vector<size_t> epoch_order(uint64_t seed, int64_t epoch, size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(epoch));
    rng.shuffle(idx);
    return idx;
}

inline double eval_mean_loss(const std::vector<CTSample>& split, model::FindNetParams& params,
                             const LossWeights& w) {
    if (split.empty()) throw ContractError("eval_mean_loss: empty split");
    double acc = 0.0;
    for (const CTSample& s : split) {
        Tape t;
        model::StageTrace trace = model::findnet_forward(t, s, params, Mode::infer);
        acc += t.value(loss_total(t, trace, s, w))[0];
    }
    return acc / static_cast<double>(split.size());
}

using EpochCallback = std::function<void(const model::FindNetParams&, const FitCarry&)>;

// Epochs of shuffled single-sample steps; validation after each epoch; stops
// once the validation loss has not improved by min_delta for `patience`
// epochs. Returns the best-validation parameters and the full history.
inline FitResult fit(const std::vector<CTSample>& train_set, const std::vector<CTSample>& val_set,
                     model::FindNetParams& params, const TrainSettings& settings,
                     FitCarry* carry_in = nullptr, const EpochCallback& on_epoch = {}) {
    if (train_set.empty() || val_set.empty()) throw ContractError("fit: train and val splits must be nonempty");
    settings.loss.validate(params.n_stages());

    std::vector<Parameter*> plist = params.parameters();
    std::vector<spectral::GaussianFilterParams*> gaussians = params.gaussians();

    ScheduleConfig sched = settings.schedule;
    if (sched.total_steps == 0)
        sched.total_steps = settings.epochs * static_cast<int64_t>(train_set.size());
    sched.validate();

    FitCarry carry;
    if (carry_in) {
        carry = *carry_in;
        if (carry.opt.m.size() != plist.size()) throw ContractError("fit: resume state does not match model");
    } else {
        carry.opt = OptimizerState(settings.optimizer, plist);
        carry.best = params;
    }

    for (int64_t epoch = carry.next_epoch; epoch <= settings.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (size_t idx : epoch_order(settings.seed, epoch, train_set.size())) {
            const CTSample& sample = train_set[idx];
            const double lr = lr_at(carry.steps_done, sched, settings.optimizer.lr);

            Tape tape;
            model::StageTrace trace = model::findnet_forward(tape, sample, params, Mode::train);
            NodeId loss = loss_total(tape, trace, sample, settings.loss);
            const double lv = tape.value(loss)[0];

            for (Parameter* p : plist) p->zero_grad();
            tape.backward(loss);
            tape.harvest();
            clip_global_norm(plist, settings.optimizer.clip_norm);
            if (!adamw_step(plist, carry.opt, lr))
                std::fprintf(stderr, "fit: non-finite gradient on sample %s, step rejected\n",
                             sample.id.c_str());
            for (auto* g : gaussians)  // keep the center frequency in [0,1]
                g->center.value[0] = std::min(1.0, std::max(0.0, g->center.value[0]));

            ++carry.steps_done;
            epoch_loss += lv;
            carry.history.step_losses.push_back(lv);
        }

        const double val_loss = eval_mean_loss(val_set, params, settings.loss);
        HistoryRow row;
        row.epoch = epoch;
        row.step = carry.steps_done;
        row.train_loss = epoch_loss / static_cast<double>(train_set.size());
        row.val_loss = val_loss;
        row.lr = lr_at(carry.steps_done - 1, sched, settings.optimizer.lr);
        carry.history.rows.push_back(row);
        if (settings.verbose)
            std::fprintf(stderr, "epoch %3lld  step %6lld  train %.6g  val %.6g  lr %.3g\n",
                         static_cast<long long>(epoch), static_cast<long long>(carry.steps_done),
                         row.train_loss, val_loss, row.lr);

        if (val_loss < carry.best_val - settings.min_delta) {
            carry.best_val = val_loss;
            carry.best_epoch = epoch;
            carry.best = params;
            carry.bad_epochs = 0;
        } else {
            ++carry.bad_epochs;
        }
        carry.next_epoch = epoch + 1;
        if (on_epoch) on_epoch(params, carry);
        if (carry.bad_epochs >= settings.patience) break;
        if (settings.stop_after_epoch > 0 && epoch >= settings.stop_after_epoch) break;
    }

    FitResult result;
    result.best = carry.best;
    result.best_val = carry.best_val;
    result.best_epoch = carry.best_epoch;
    result.history = carry.history;
    return result;
}

}  // namespace training
}  // namespace findnet
