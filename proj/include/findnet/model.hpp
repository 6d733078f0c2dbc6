#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "findnet/sample.hpp"
#include "findnet/spectral.hpp"

namespace findnet {
namespace model {

using spectral::FourierUnitParams;
using spectral::GaussianFilterParams;
using spectral::GffcParams;
using spectral::global_channel_count;

// ---------------------------------------------------------------------------
// Channel allocation schedule across stages
// ---------------------------------------------------------------------------

// alpha(0) = 0; afterwards min(0.8, 0.8*s/ceil(0.6*S)), rounded to multiples
// of 0.1. Monotone nondecreasing, reaching 0.8 in the later stages.
inline double alpha_schedule_value(int64_t s, int64_t S) {
    if (s < 0 || s >= S) throw ContractError("alpha_schedule: stage index out of range");
    if (s == 0) return 0.0;
    const double denom = std::ceil(0.6 * static_cast<double>(S));
    const double a = std::min(0.8, 0.8 * static_cast<double>(s) / denom);
    return std::round(a * 10.0) / 10.0;
}

inline std::pair<double, double> alpha_schedule(int64_t s, int64_t S) {
    const double a = alpha_schedule_value(s, S);
    return {a, a};
}

// ---------------------------------------------------------------------------
// FE-ResNet: lift -> T frequency-enhanced ResBlocks -> project, plus an
// outer residual connection. Blocks follow
//   y = x + BN(op2(ReLU(BN(op1(x)))))
// where op is the GFFC mixing (plain 3x3 conv when alpha == 0).
// ---------------------------------------------------------------------------

struct FeBlockParams {
    GffcParams op1, op2;

    FeBlockParams() = default;
    FeBlockParams(const std::string& name, int64_t width, double alpha, Rng& rng)
        : op1(name + ".op1", width, width, alpha, alpha, 3, rng),
          op2(name + ".op2", width, width, alpha, alpha, 3, rng) {}

    void collect(std::vector<Parameter*>& out) {
        op1.collect(out);
        op2.collect(out);
    }
    void visit(const TensorVisitor& v) {
        op1.visit(v);
        op2.visit(v);
    }
};

struct FeResNetParams {
    int64_t in_ch = 0, width = 0, depth = 0;
    double alpha = 0.0;
    bool plain = false;  // hard-coded plain-conv ResBlocks (requires alpha == 0)
    ConvLayer lift;      // in_ch -> width
    std::vector<FeBlockParams> blocks;
    ConvLayer proj;      // width -> in_ch, zero-init so the net starts as identity

    FeResNetParams() = default;
    FeResNetParams(const std::string& name, int64_t in_channels, int64_t w, int64_t t, double a, Rng& rng)
        : in_ch(in_channels), width(w), depth(t), alpha(a),
          lift(name + ".lift", w, in_channels, 3, rng),
          proj(ConvLayer::zeros(name + ".proj", in_channels, w, 3)) {
        blocks.reserve(static_cast<size_t>(t));
        for (int64_t b = 0; b < t; ++b)
            blocks.emplace_back(name + ".block" + std::to_string(b + 1), w, a, rng);
    }

    void collect(std::vector<Parameter*>& out) {
        lift.collect(out);
        for (auto& b : blocks) b.collect(out);
        proj.collect(out);
    }
    void visit(const TensorVisitor& v) {
        lift.visit(v);
        for (auto& b : blocks) b.visit(v);
        proj.visit(v);
    }
    void gaussians(std::vector<GaussianFilterParams*>& out) {
        for (auto& b : blocks) {
            for (auto* g : b.op1.gaussians()) out.push_back(g);
            for (auto* g : b.op2.gaussians()) out.push_back(g);
        }
    }
};

namespace detail {

inline spectral::BranchPair apply_branch_bn(Tape& t, spectral::BranchPair x, GffcParams& p, Mode mode) {
    spectral::BranchPair out;
    if (x.local >= 0) out.local = batch_norm(t, x.local, *p.bn_local, mode);
    if (x.global >= 0) out.global = batch_norm(t, x.global, *p.bn_global, mode);
    return out;
}

inline spectral::BranchPair branch_relu(Tape& t, spectral::BranchPair x) {
    spectral::BranchPair out;
    if (x.local >= 0) out.local = relu(t, x.local);
    if (x.global >= 0) out.global = relu(t, x.global);
    return out;
}

inline NodeId fe_block_gffc(Tape& t, NodeId x, FeBlockParams& p, bool use_gaussian, Mode mode) {
    const int64_t c = t.value(x).extent(0);
    const int64_t cg = p.op1.cg_in;
    spectral::BranchPair in;
    if (cg < c) in.local = slice_ch(t, x, 0, c - cg);
    if (cg > 0) in.global = slice_ch(t, x, c - cg, c);

    spectral::BranchPair h = spectral::gffc_mix(t, in, p.op1, use_gaussian, mode);
    h = apply_branch_bn(t, h, p.op1, mode);
    h = branch_relu(t, h);
    h = spectral::gffc_mix(t, h, p.op2, use_gaussian, mode);
    h = apply_branch_bn(t, h, p.op2, mode);

    NodeId merged;
    if (h.local >= 0 && h.global >= 0)
        merged = concat_ch(t, h.local, h.global);
    else
        merged = h.local >= 0 ? h.local : h.global;
    return add(t, x, merged);
}

inline NodeId fe_block_plain(Tape& t, NodeId x, FeBlockParams& p, Mode mode) {
    NodeId h = p.op1.l2l->apply(t, x);
    h = batch_norm(t, h, *p.op1.bn_local, mode);
    h = relu(t, h);
    h = p.op2.l2l->apply(t, h);
    h = batch_norm(t, h, *p.op2.bn_local, mode);
    return add(t, x, h);
}

}  // namespace detail

// Learned proximal operator.
inline NodeId fe_resnet(Tape& t, NodeId x, FeResNetParams& p, bool use_gaussian, Mode mode) {
    if (t.value(x).extent(0) != p.in_ch)
        throw ConfigError("fe_resnet: input has " + std::to_string(t.value(x).extent(0)) +
                          " channels, expected " + std::to_string(p.in_ch));
    if (p.plain && p.alpha != 0.0) throw ConfigError("fe_resnet: plain blocks require alpha == 0");
    NodeId h = p.lift.apply(t, x);
    for (auto& b : p.blocks)
        h = p.plain ? detail::fe_block_plain(t, h, b, mode) : detail::fe_block_gffc(t, h, b, use_gaussian, mode);
    return add(t, p.proj.apply(t, h), x);
}

// ---------------------------------------------------------------------------
// Dictionary model and stage updates
// ---------------------------------------------------------------------------

// N learnable kernels whose combination with the feature maps M synthesizes
// the artifact image A.
struct DictionaryKernels {
    Parameter kernels;  // [N,1,k,k]

    DictionaryKernels() = default;
    DictionaryKernels(const std::string& name, int64_t n, int64_t k, Rng& rng)
        : kernels(name, Tensor({n, 1, k, k})) {
        if (k % 2 == 0 || n < 1) throw ConfigError("dictionary: need odd kernel size and N >= 1");
        // unit-normalized random Gaussian per kernel
        for (int64_t i = 0; i < n; ++i) {
            double nrm2 = 0.0;
            for (int64_t j = 0; j < k * k; ++j) {
                double v = rng.normal();
                kernels.value[i * k * k + j] = v;
                nrm2 += v * v;
            }
            const double inv = 1.0 / std::sqrt(nrm2);
            for (int64_t j = 0; j < k * k; ++j) kernels.value[i * k * k + j] *= inv;
        }
    }

    int64_t n() const { return kernels.value.extent(0); }
    int64_t ksize() const { return kernels.value.extent(2); }
    int64_t padding() const { return ksize() / 2; }

    // conv layout [1,N,k,k]; same memory, different metadata
    NodeId as_conv(Tape& t) { return reshape(t, t.param(kernels), {1, n(), ksize(), ksize()}); }

    void collect(std::vector<Parameter*>& out) { out.push_back(&kernels); }
    void visit(const TensorVisitor& v) { v(kernels.name, kernels.value); }
};

// A = sum_n K_n (x) M_n, same-padded; linear in both arguments.
inline NodeId artifact_synthesis(Tape& t, DictionaryKernels& k, NodeId m) {
    if (t.value(m).extent(0) != k.n())
        throw DimError("artifact_synthesis: M has " + std::to_string(t.value(m).extent(0)) +
                       " channels, dictionary has " + std::to_string(k.n()));
    return conv2d(t, m, k.as_conv(t), k.padding());
}

// adjoint: 1-channel residual -> N feature channels
inline NodeId dictionary_adjoint(Tape& t, DictionaryKernels& k, NodeId r) {
    return conv2d_transpose(t, r, k.as_conv(t), k.padding());
}

struct StageParams {
    Parameter eta1_raw;  // eta1 = softplus(raw) > 0
    Parameter eta2_raw;  // eta2 = sigmoid(raw) in (0,1]
    double alpha_in = 0.0, alpha_out = 0.0;
    FeResNetParams mnet;  // N -> N
    FeResNetParams xnet;  // 1 -> 1

    StageParams() = default;
    StageParams(const std::string& name, int64_t n_kernels, int64_t width, int64_t depth, double alpha,
                Rng& rng)
        : eta1_raw(name + ".eta1", Tensor::scalar(spectral::softplus_inv(0.1))),
          eta2_raw(name + ".eta2", Tensor::scalar(0.0)),  // sigmoid(0) = 0.5
          alpha_in(alpha), alpha_out(alpha),
          mnet(name + ".mnet", n_kernels, width, depth, alpha, rng),
          xnet(name + ".xnet", 1, width, depth, alpha, rng) {}

    double eta1() const { return findnet::detail::softplus_val(eta1_raw.value[0]); }
    double eta2() const { return findnet::detail::sigmoid_val(eta2_raw.value[0]); }
    void set_eta1(double v) { eta1_raw.value[0] = v <= 0.0 ? -1e3 : spectral::softplus_inv(v); }
    // raw 40 saturates the sigmoid to exactly 1.0 in double precision
    void set_eta2(double v) {
        if (v >= 1.0)
            eta2_raw.value[0] = 40.0;
        else if (v <= 0.0)
            eta2_raw.value[0] = -1e3;
        else
            eta2_raw.value[0] = std::log(v / (1.0 - v));
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&eta1_raw);
        out.push_back(&eta2_raw);
        mnet.collect(out);
        xnet.collect(out);
    }
    void visit(const TensorVisitor& v) {
        v(eta1_raw.name, eta1_raw.value);
        v(eta2_raw.name, eta2_raw.value);
        mnet.visit(v);
        xnet.visit(v);
    }
};

// Model hyperparameters; everything needed to rebuild the parameter tree.
struct ModelConfig {
    int64_t stages = 10;     // S
    int64_t n_kernels = 8;   // N
    int64_t ksize = 9;       // dictionary kernel size
    int64_t depth = 2;       // T FE-ResBlocks per prox net
    int64_t width = 16;      // internal channel width
    bool use_gaussian = true;
    bool alpha_zero = false;   // force alpha == 0 in every stage (plain-conv baseline axis)
    std::string m0_mode = "resnet";  // "resnet" | "zero"
};

struct FindNetParams {
    ModelConfig cfg;
    DictionaryKernels kernels;
    FeResNetParams m_init;  // produces M0 from the adjoint residual; alpha = 0
    std::vector<StageParams> stages;

    FindNetParams() = default;
    FindNetParams(const ModelConfig& c, Rng& rng)
        : cfg(c),
          kernels("dictionary.kernels", c.n_kernels, c.ksize, rng),
          m_init("m_init", c.n_kernels, c.width, c.depth, 0.0, rng) {
        if (c.stages < 1) throw ConfigError("model: need at least one stage");
        stages.reserve(static_cast<size_t>(c.stages));
        for (int64_t s = 0; s < c.stages; ++s) {
            const double a = c.alpha_zero ? 0.0 : alpha_schedule_value(s, c.stages);
            stages.emplace_back("stage" + std::to_string(s + 1), c.n_kernels, c.width, c.depth, a, rng);
        }
    }

    int64_t n_stages() const { return static_cast<int64_t>(stages.size()); }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        kernels.collect(out);
        m_init.collect(out);
        for (auto& s : stages) s.collect(out);
        return out;
    }
    void visit(const TensorVisitor& v) {
        kernels.visit(v);
        m_init.visit(v);
        for (auto& s : stages) s.visit(v);
    }
    std::vector<GaussianFilterParams*> gaussians() {
        std::vector<GaussianFilterParams*> out;
        m_init.gaussians(out);
        for (auto& s : stages) {
            s.mnet.gaussians(out);
            s.xnet.gaussians(out);
        }
        return out;
    }

    // Same weights, plain-conv ResBlock code path (valid only when every
    // alpha is zero). Used to verify the structural reduction.
    FindNetParams as_plain() const {
        FindNetParams p = *this;
        auto mark = [](FeResNetParams& f) {
            if (f.alpha != 0.0) throw ConfigError("as_plain: requires alpha == 0 everywhere");
            f.plain = true;
        };
        mark(p.m_init);
        for (auto& s : p.stages) {
            mark(s.mnet);
            mark(s.xnet);
        }
        return p;
    }
};

// Per-stage outputs retained for the multi-term loss: X(0..S), M(0..S),
// A(1..S), as node ids on the forward tape.
struct StageTrace {
    Tape* tape = nullptr;
    std::vector<NodeId> x_nodes;  // size S+1
    std::vector<NodeId> m_nodes;  // size S+1
    std::vector<NodeId> a_nodes;  // size S; a_nodes[s-1] holds A(s)

    int64_t n_stages() const { return static_cast<int64_t>(a_nodes.size()); }
    const Tensor& x(int64_t s) const { return tape->value(x_nodes.at(static_cast<size_t>(s))); }
    const Tensor& m(int64_t s) const { return tape->value(m_nodes.at(static_cast<size_t>(s))); }
    const Tensor& a(int64_t s) const { return tape->value(a_nodes.at(static_cast<size_t>(s - 1))); }
    NodeId x_node(int64_t s) const { return x_nodes.at(static_cast<size_t>(s)); }
    NodeId a_node(int64_t s) const { return a_nodes.at(static_cast<size_t>(s - 1)); }
};

// M step: G = K^T (x) (I . (A_prev + X_prev - Y)); M = prox(M_prev - eta1 G)
inline NodeId mnet_update(Tape& t, NodeId m_prev, NodeId x_prev, const Tensor& y, const Tensor& mask,
                          DictionaryKernels& k, StageParams& st, bool use_gaussian, Mode mode) {
    NodeId a_prev = artifact_synthesis(t, k, m_prev);
    NodeId resid = mul_const(t, sub(t, add(t, a_prev, x_prev), t.constant(y)), mask);
    NodeId g = dictionary_adjoint(t, k, resid);
    NodeId eta1 = softplus(t, t.param(st.eta1_raw));
    NodeId m_in = sub(t, m_prev, smul(t, eta1, g));
    return fe_resnet(t, m_in, st.mnet, use_gaussian, mode);
}

// X step: Z = (1 - eta2 I) . X_prev + eta2 I . (Y - A_next); X = prox(Z)
inline NodeId xnet_update(Tape& t, NodeId x_prev, const Tensor& y, NodeId a_next, const Tensor& mask,
                          StageParams& st, bool use_gaussian, Mode mode) {
    require_same_shape(t.value(x_prev), y, "xnet_update");
    NodeId eta2 = sigmoid(t, t.param(st.eta2_raw));
    NodeId u = smul(t, eta2, t.constant(mask));                     // eta2 * I
    NodeId keep = sub(t, t.constant(Tensor::ones(y.shape())), u);   // 1 - eta2 * I
    NodeId z = add(t, mul(t, keep, x_prev), mul(t, u, sub(t, t.constant(y), a_next)));
    return fe_resnet(t, z, st.xnet, use_gaussian, mode);
}

// Unrolled forward pass. X(0) = LI initialization; M(0) from a small
// FE-ResNet on K^T (x) (I . (Y - X0)) (or zeros); then S stages of
// mnet_update / artifact_synthesis / xnet_update.
inline StageTrace findnet_forward(Tape& t, const CTSample& sample, FindNetParams& p, Mode mode) {
    sample.validate();
    require_pow2_hw(sample.Y.extent(1), sample.Y.extent(2), "findnet_forward");
    const bool gf = p.cfg.use_gaussian;

    StageTrace trace;
    trace.tape = &t;

    NodeId x = t.constant(sample.X0);
    NodeId m;
    if (p.cfg.m0_mode == "zero") {
        m = t.constant(Tensor::zeros({p.kernels.n(), sample.Y.extent(1), sample.Y.extent(2)}));
    } else {
        Tensor r0 = sample.I * (sample.Y - sample.X0);
        NodeId code = dictionary_adjoint(t, p.kernels, t.constant(std::move(r0)));
        m = fe_resnet(t, code, p.m_init, gf, mode);
    }
    trace.x_nodes.push_back(x);
    trace.m_nodes.push_back(m);

    for (auto& st : p.stages) {
        m = mnet_update(t, m, x, sample.Y, sample.I, p.kernels, st, gf, mode);
        NodeId a = artifact_synthesis(t, p.kernels, m);
        x = xnet_update(t, x, sample.Y, a, sample.I, st, gf, mode);
        trace.m_nodes.push_back(m);
        trace.a_nodes.push_back(a);
        trace.x_nodes.push_back(x);
    }
    return trace;
}

}  // namespace model
}  // namespace findnet
