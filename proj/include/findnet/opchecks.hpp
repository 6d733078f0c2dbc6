#pragma once

#include <functional>
#include <string>
#include <vector>

#include "findnet/gradcheck.hpp"
#include "findnet/model.hpp"
#include "findnet/training.hpp"

namespace findnet {
namespace opchecks {

// Named gradient checks over every registered operator plus the composite
// blocks and a full unrolled model. Shared by the verification command, the
// unit tests and the acceptance suite. All inputs come from fixed seeds.

struct OpCheck {
    std::string name;
    std::function<double()> run;  // returns max relative error
    double threshold = 1e-4;
};

namespace detail {

// values bounded away from 0 so ReLU/L1 kinks stay clear of the FD step
inline Tensor away_from_zero(Rng& rng, Shape shape, double lo = 0.25, double hi = 1.5) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double mag = rng.uniform(lo, hi);
        t[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

inline void randomize(std::vector<Parameter*> ps, uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    for (Parameter* p : ps)
        for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = scale * rng.normal();
}

// unary op applied to one input, squared-sum readout
inline double check_unary(const std::function<NodeId(Tape&, NodeId)>& op, const Tensor& x) {
    return grad_check([&](Tape& t, NodeId v) { return sum_all(t, square(t, op(t, v))); }, x);
}

// binary op checked w.r.t. both operands
inline double check_binary(const std::function<NodeId(Tape&, NodeId, NodeId)>& op, const Tensor& a,
                           const Tensor& b) {
    double e1 = grad_check(
        [&](Tape& t, NodeId v) { return sum_all(t, square(t, op(t, v, t.constant(b)))); }, a);
    double e2 = grad_check(
        [&](Tape& t, NodeId v) { return sum_all(t, square(t, op(t, t.constant(a), v))); }, b);
    return std::max(e1, e2);
}

}  // namespace detail

inline std::vector<OpCheck> all_checks() {
    using namespace detail;
    std::vector<OpCheck> checks;
    auto add_check = [&](std::string name, std::function<double()> fn) {
        checks.push_back(OpCheck{std::move(name), std::move(fn)});
    };

    add_check("add", [] {
        Rng r(1);
        return check_binary([](Tape& t, NodeId a, NodeId b) { return add(t, a, b); },
                            r.normal_tensor({2, 4, 4}), r.normal_tensor({2, 4, 4}));
    });
    add_check("sub", [] {
        Rng r(2);
        return check_binary([](Tape& t, NodeId a, NodeId b) { return sub(t, a, b); },
                            r.normal_tensor({2, 4, 4}), r.normal_tensor({2, 4, 4}));
    });
    add_check("mul", [] {
        Rng r(3);
        return check_binary([](Tape& t, NodeId a, NodeId b) { return mul(t, a, b); },
                            r.normal_tensor({2, 4, 4}), r.normal_tensor({2, 4, 4}));
    });
    add_check("div", [] {
        Rng r(4);
        return check_binary([](Tape& t, NodeId a, NodeId b) { return div(t, a, b); },
                            r.normal_tensor({2, 4, 4}), away_from_zero(r, {2, 4, 4}, 0.5, 2.0));
    });
    add_check("scale", [] {
        Rng r(5);
        return check_unary([](Tape& t, NodeId a) { return scale(t, a, -1.7); }, r.normal_tensor({3, 5}));
    });
    add_check("smul", [] {
        Rng r(6);
        return check_binary([](Tape& t, NodeId a, NodeId b) { return smul(t, a, b); },
                            Tensor::scalar(0.8), r.normal_tensor({2, 4, 4}));
    });
    add_check("bcast", [] {
        return check_unary([](Tape& t, NodeId a) { return bcast(t, a, {3, 4}); }, Tensor::scalar(1.3));
    });
    add_check("relu", [] {
        Rng r(7);
        return check_unary([](Tape& t, NodeId a) { return relu(t, a); }, away_from_zero(r, {2, 6, 6}));
    });
    add_check("abs", [] {
        Rng r(8);
        return check_unary([](Tape& t, NodeId a) { return abs_val(t, a); }, away_from_zero(r, {2, 6, 6}));
    });
    add_check("square", [] {
        Rng r(9);
        return check_unary([](Tape& t, NodeId a) { return square(t, a); }, r.normal_tensor({2, 6, 6}));
    });
    add_check("exp", [] {
        Rng r(10);
        return check_unary([](Tape& t, NodeId a) { return exp_op(t, a); }, r.normal_tensor({3, 3}));
    });
    add_check("softplus", [] {
        Rng r(11);
        return check_unary([](Tape& t, NodeId a) { return softplus(t, a); }, r.normal_tensor({4, 4}));
    });
    add_check("sigmoid", [] {
        Rng r(12);
        return check_unary([](Tape& t, NodeId a) { return sigmoid(t, a); }, r.normal_tensor({4, 4}));
    });
    add_check("sum", [] {
        Rng r(13);
        return check_unary([](Tape& t, NodeId a) { return sum_all(t, a); }, r.normal_tensor({2, 5, 5}));
    });
    add_check("reshape", [] {
        Rng r(14);
        return check_unary([](Tape& t, NodeId a) { return reshape(t, a, {4, 1, 2, 2}); },
                           r.normal_tensor({4, 2, 2}));
    });
    add_check("mul_const", [] {
        Rng r(15);
        Tensor mask = r.uniform_tensor({2, 4, 4}, 0.0, 1.0);
        for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = mask[i] < 0.5 ? 0.0 : 1.0;
        return check_unary([mask](Tape& t, NodeId a) { return mul_const(t, a, mask); },
                           r.normal_tensor({2, 4, 4}));
    });
    add_check("conv2d", [] {
        Rng r(16);
        return check_binary([](Tape& t, NodeId a, NodeId b) { return conv2d(t, a, b, 1); },
                            r.normal_tensor({2, 6, 6}), r.normal_tensor({3, 2, 3, 3}));
    });
    add_check("conv2d_transpose", [] {
        Rng r(17);
        return check_binary([](Tape& t, NodeId a, NodeId b) { return conv2d_transpose(t, a, b, 1); },
                            r.normal_tensor({3, 6, 6}), r.normal_tensor({3, 2, 3, 3}));
    });
    add_check("add_bias", [] {
        Rng r(18);
        return check_binary([](Tape& t, NodeId a, NodeId b) { return add_bias(t, a, b); },
                            r.normal_tensor({3, 4, 4}), r.normal_tensor({3}));
    });
    add_check("batch_norm", [] {
        Rng r(19);
        BatchNormState bn("bn", 3);
        randomize({&bn.gamma, &bn.beta}, 191, 0.7);
        Tensor x = r.normal_tensor({3, 4, 4});
        // w.r.t. input in both modes (train output ignores the running
        // stats, so their in-place update cannot skew the FD evals)
        double e1 = grad_check(
            [&](Tape& t, NodeId v) { return sum_all(t, square(t, batch_norm(t, v, bn, Mode::train))); }, x);
        double e2 = grad_check(
            [&](Tape& t, NodeId v) { return sum_all(t, square(t, batch_norm(t, v, bn, Mode::infer))); }, x);
        // w.r.t. scale/shift
        double e3 = grad_check_params(
            [&](Tape& t) {
                return sum_all(t, square(t, batch_norm(t, t.constant(x), bn, Mode::train)));
            },
            {&bn.gamma, &bn.beta});
        return std::max({e1, e2, e3});
    });
    add_check("rfft2_stack", [] {
        Rng r(20);
        return check_unary([](Tape& t, NodeId a) { return rfft2_stack(t, a); }, r.normal_tensor({2, 8, 8}));
    });
    add_check("irfft2_unstack", [] {
        Rng r(21);
        return check_unary([](Tape& t, NodeId a) { return irfft2_unstack(t, a, 8); },
                           r.normal_tensor({4, 8, 5}));
    });
    add_check("mul_gain_hw", [] {
        Rng r(22);
        return check_binary([](Tape& t, NodeId a, NodeId b) { return mul_gain_hw(t, a, b); },
                            r.normal_tensor({3, 4, 5}), r.normal_tensor({4, 5}));
    });
    add_check("concat_ch", [] {
        Rng r(23);
        return check_binary([](Tape& t, NodeId a, NodeId b) { return concat_ch(t, a, b); },
                            r.normal_tensor({2, 4, 4}), r.normal_tensor({3, 4, 4}));
    });
    add_check("slice_ch", [] {
        Rng r(24);
        return check_unary([](Tape& t, NodeId a) { return slice_ch(t, a, 1, 3); }, r.normal_tensor({4, 4, 4}));
    });
    add_check("quadrant_stack", [] {
        Rng r(25);
        return check_unary([](Tape& t, NodeId a) { return quadrant_stack(t, a); }, r.normal_tensor({2, 8, 8}));
    });
    add_check("quadrant_unstack", [] {
        Rng r(26);
        return check_unary([](Tape& t, NodeId a) { return quadrant_unstack(t, a); },
                           r.normal_tensor({8, 4, 4}));
    });
    add_check("gaussian_gain", [] {
        spectral::GaussianFilterParams g("g");
        g.set_sigma(0.8);
        g.set_c(0.35);
        spectral::FrequencyGrid grid = spectral::frequency_grid(8, 8);
        return grad_check_params(
            [&](Tape& t) { return sum_all(t, square(t, spectral::gaussian_gain_node(t, grid, g))); },
            {&g.sigma_raw, &g.center});
    });
    add_check("fourier_unit", [] {
        Rng r(27);
        spectral::FourierUnitParams fu("fu", 2, r);
        randomize([&] {
            std::vector<Parameter*> ps;
            fu.collect(ps);
            return ps;
        }(), 271, 0.4);
        fu.gauss.set_sigma(0.9);
        fu.gauss.set_c(0.2);
        Tensor x = r.normal_tensor({2, 8, 8});
        std::vector<Parameter*> ps;
        fu.collect(ps);
        double e1 = grad_check(
            [&](Tape& t, NodeId v) {
                spectral::FourierUnitParams local = fu;
                return sum_all(t, square(t, spectral::fourier_unit(t, v, local, true, Mode::train)));
            },
            x, 1e-5, 64);
        double e2 = grad_check_params(
            [&](Tape& t) {
                return sum_all(
                    t, square(t, spectral::fourier_unit(t, t.constant(x), fu, true, Mode::train)));
            },
            ps, 1e-5, 64);
        return std::max(e1, e2);
    });
    add_check("local_fourier_unit", [] {
        Rng r(28);
        spectral::FourierUnitParams lfu("lfu", 8, r);
        Tensor x = r.normal_tensor({2, 8, 8});
        std::vector<Parameter*> ps;
        lfu.collect(ps);
        randomize(ps, 281, 0.4);
        lfu.gauss.set_sigma(1.1);
        lfu.gauss.set_c(0.1);
        double e1 = grad_check(
            [&](Tape& t, NodeId v) {
                spectral::FourierUnitParams local = lfu;
                return sum_all(t, square(t, spectral::local_fourier_unit(t, v, local, true, Mode::train)));
            },
            x, 1e-5, 64);
        double e2 = grad_check_params(
            [&](Tape& t) {
                return sum_all(
                    t, square(t, spectral::local_fourier_unit(t, t.constant(x), lfu, true, Mode::train)));
            },
            ps, 1e-5, 64);
        return std::max(e1, e2);
    });
    for (double alpha : {0.0, 0.5, 0.8}) {
        add_check("gffc_block.alpha" + std::to_string(alpha).substr(0, 3), [alpha] {
            Rng r(29);
            spectral::GffcParams p("gffc", 4, 4, alpha, alpha, 3, r);
            std::vector<Parameter*> ps;
            p.collect(ps);
            randomize(ps, 291, 0.4);
            Tensor x = r.normal_tensor({4, 8, 8});
            auto forward = [&](Tape& t, NodeId v) {
                spectral::BranchPair in;
                if (p.cl_in > 0) in.local = slice_ch(t, v, 0, p.cl_in);
                if (p.cg_in > 0) in.global = slice_ch(t, v, p.cl_in, 4);
                spectral::BranchPair out = spectral::gffc_block(t, in, p, true, Mode::train);
                NodeId merged = out.local;
                if (out.global >= 0)
                    merged = merged >= 0 ? concat_ch(t, merged, out.global) : out.global;
                return sum_all(t, square(t, merged));
            };
            double e1 = grad_check([&](Tape& t, NodeId v) { return forward(t, v); }, x, 1e-5, 64);
            double e2 = grad_check_params([&](Tape& t) { return forward(t, t.constant(x)); }, ps, 1e-5, 96);
            return std::max(e1, e2);
        });
    }
    add_check("fe_resnet.alpha0.5", [] {
        Rng r(30);
        model::FeResNetParams fe("fe", 4, 8, 2, 0.5, r);
        std::vector<Parameter*> ps;
        fe.collect(ps);
        randomize(ps, 301, 0.3);
        Tensor x = r.normal_tensor({4, 8, 8});
        double e1 = grad_check(
            [&](Tape& t, NodeId v) {
                return sum_all(t, square(t, model::fe_resnet(t, v, fe, true, Mode::train)));
            },
            x, 1e-5, 64);
        double e2 = grad_check_params(
            [&](Tape& t) {
                return sum_all(t, square(t, model::fe_resnet(t, t.constant(x), fe, true, Mode::train)));
            },
            ps, 1e-5, 96);
        return std::max(e1, e2);
    });
    for (const char* mode_name : {"train", "infer"}) {
        const Mode mode = std::string(mode_name) == "train" ? Mode::train : Mode::infer;
        add_check(std::string("findnet.s2.") + mode_name, [mode] {
            Rng r(31);
            model::ModelConfig mc;
            mc.stages = 2;
            mc.n_kernels = 3;
            mc.ksize = 3;
            mc.depth = 1;
            mc.width = 4;
            model::FindNetParams params(mc, r);
            randomize(params.parameters(), 311, 0.25);
            CTSample s;
            s.id = "gc";
            s.Y = r.normal_tensor({1, 16, 16});
            s.X_gt = r.normal_tensor({1, 16, 16});
            s.X0 = r.normal_tensor({1, 16, 16});
            s.I = Tensor::ones({1, 16, 16});
            for (int64_t i = 60; i < 80; ++i) s.I[i] = 0.0;
            training::LossWeights w = training::LossWeights::defaults(2);
            return grad_check_params(
                [&](Tape& t) {
                    auto trace = model::findnet_forward(t, s, params, mode);
                    return training::loss_total(t, trace, s, w);
                },
                params.parameters(), 1e-5, 200);
        });
    }
    return checks;
}

}  // namespace opchecks
}  // namespace findnet
