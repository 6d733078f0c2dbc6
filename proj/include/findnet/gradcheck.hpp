#pragma once

#include <functional>
#include <numeric>
#include <vector>

#include "findnet/ops.hpp"
#include "findnet/rng.hpp"
#include "findnet/tape.hpp"

namespace findnet {

// A differentiable scalar function expressed as a graph builder: given a tape
// and the node holding x, return the scalar loss node.
using TapeFn = std::function<NodeId(Tape&, NodeId)>;

namespace detail {
inline double eval_scalar(const TapeFn& f, const Tensor& x) {
    Tape t;
    NodeId loss = f(t, t.constant(x));
    if (t.value(loss).numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
    return t.value(loss)[0];
}
}  // namespace detail

// Compares the tape gradient of f at x against central finite differences.
// Returns the max over checked coordinates of
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
// max_coords > 0 checks a deterministic random subset of coordinates
// (keeps large parameter vectors tractable); 0 checks all of them.
inline double grad_check(const TapeFn& f, const Tensor& x, double step = 1e-5,
                         int64_t max_coords = 0, uint64_t seed = 1234567) {
    if (step <= 0.0) throw ContractError("grad_check: step must be positive");

    Tape t;
    NodeId xid = t.constant(x);
    NodeId loss = f(t, xid);
    if (t.value(loss).numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
    t.backward(loss);
    Tensor analytic = t.grad(xid);

    std::vector<int64_t> coords(static_cast<size_t>(x.numel()));
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && max_coords < x.numel()) {
        Rng rng(seed);
        rng.shuffle(coords);
        coords.resize(static_cast<size_t>(max_coords));
    }

    double max_err = 0.0;
    Tensor xp = x;
    for (int64_t i : coords) {
        const double orig = x[i];
        xp[i] = orig + step;
        const double fp = detail::eval_scalar(f, xp);
        xp[i] = orig - step;
        const double fm = detail::eval_scalar(f, xp);
        xp[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic[i];
        const double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
        max_err = std::max(max_err, err);
    }
    return max_err;
}

// Same check, but against a set of named parameters: f builds the graph by
// binding the parameters' current values (Tape::param), and the analytic
// gradient is read back through harvest(). This is exactly the gradient the
// optimizer consumes, so it exercises the full training path.
inline double grad_check_params(const std::function<NodeId(Tape&)>& f, std::vector<Parameter*> ps,
                                double step = 1e-5, int64_t max_coords = 0, uint64_t seed = 1234567) {
    if (step <= 0.0) throw ContractError("grad_check_params: step must be positive");
    for (Parameter* p : ps) p->zero_grad();
    {
        Tape t;
        NodeId loss = f(t);
        if (t.value(loss).numel() != 1) throw ContractError("grad_check_params: f must be scalar-valued");
        t.backward(loss);
        t.harvest();
    }
    auto eval = [&]() {
        Tape t;
        return t.value(f(t))[0];
    };

    int64_t total = 0;
    for (const Parameter* p : ps) total += p->value.numel();
    std::vector<int64_t> coords(static_cast<size_t>(total));
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && max_coords < total) {
        Rng rng(seed);
        rng.shuffle(coords);
        coords.resize(static_cast<size_t>(max_coords));
    }

    double max_err = 0.0;
    for (int64_t flat : coords) {
        int64_t o = flat;
        Parameter* owner = nullptr;
        for (Parameter* p : ps) {
            if (o < p->value.numel()) {
                owner = p;
                break;
            }
            o -= p->value.numel();
        }
        const double orig = owner->value[o];
        owner->value[o] = orig + step;
        const double fp = eval();
        owner->value[o] = orig - step;
        const double fm = eval();
        owner->value[o] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = owner->grad[o];
        const double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
        max_err = std::max(max_err, err);
    }
    return max_err;
}

// --- parameter flattening, used to gradcheck whole models -----------------

inline int64_t total_numel(const std::vector<Parameter*>& ps) {
    int64_t n = 0;
    for (const Parameter* p : ps) n += p->value.numel();
    return n;
}

inline Tensor flatten_values(const std::vector<Parameter*>& ps) {
    Tensor flat(Shape{std::max<int64_t>(1, total_numel(ps))});
    int64_t o = 0;
    for (const Parameter* p : ps)
        for (int64_t i = 0; i < p->value.numel(); ++i) flat[o++] = p->value[i];
    return flat;
}

inline void unflatten_values(const Tensor& flat, std::vector<Parameter*>& ps) {
    int64_t o = 0;
    for (Parameter* p : ps)
        for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = flat[o++];
}

}  // namespace findnet
