#pragma once

#include <optional>
#include <string>

#include "findnet/layers.hpp"
#include "findnet/ops.hpp"

namespace findnet {
namespace spectral {

// ---------------------------------------------------------------------------
// Frequency grid and trainable Gaussian gain
// ---------------------------------------------------------------------------

// Normalized frequency distances of the half-spectrum bins. For bin (u,v),
// f_u = min(u, H-u)/(H/2), f_v = v/(W/2), D = sqrt((f_u^2 + f_v^2)/2).
// D[0,0] == 0 (DC) and D == 1 only at the (H/2, W/2) Nyquist corner.
struct FrequencyGrid {
    Tensor D;  // [H, W/2+1]
};

inline FrequencyGrid frequency_grid(int64_t h, int64_t w) {
    if (h < 2 || w < 2) throw SizeError("frequency_grid: extents must be >= 2");
    require_pow2_hw(h, w, "frequency_grid");
    const int64_t wh = w / 2 + 1;
    FrequencyGrid g{Tensor({h, wh})};
    for (int64_t u = 0; u < h; ++u) {
        const double fu = static_cast<double>(std::min(u, h - u)) / static_cast<double>(h / 2);
        for (int64_t v = 0; v < wh; ++v) {
            const double fv = static_cast<double>(v) / static_cast<double>(w / 2);
            g.D.at(u, v) = std::sqrt((fu * fu + fv * fv) / 2.0);
        }
    }
    return g;
}

inline double softplus_inv(double y) {
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

// Learnable band-pass gain G(u,v) = exp(-((D^2 - c^2)/(D*sigma + eps))^2).
// sigma is carried through a softplus so D*sigma + eps stays above eps;
// center is clamped to [0,1] after each optimizer step. At the DC bin with
// c != 0 the denominator is exactly eps and the gain is effectively zero;
// that is the formula's literal behavior and is left as-is.
struct GaussianFilterParams {
    Parameter sigma_raw;  // sigma = softplus(sigma_raw)
    Parameter center;     // c
    double epsilon = 1e-6;

    GaussianFilterParams() = default;
    explicit GaussianFilterParams(const std::string& name)
        : sigma_raw(name + ".sigma", Tensor::scalar(softplus_inv(1.0))),
          center(name + ".center", Tensor::scalar(0.0)) {}

    double sigma() const { return detail::softplus_val(sigma_raw.value[0]); }
    void set_sigma(double s) { sigma_raw.value[0] = softplus_inv(s); }
    double c() const { return center.value[0]; }
    void set_c(double v) { center.value[0] = v; }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&sigma_raw);
        out.push_back(&center);
    }
    void visit(const TensorVisitor& v) {
        v(sigma_raw.name, sigma_raw.value);
        v(center.name, center.value);
    }
};

// Direct closed-form evaluation (no tape).
inline Tensor gaussian_gain(const FrequencyGrid& grid, const GaussianFilterParams& p) {
    const double sg = p.sigma(), c = p.c();
    Tensor out(grid.D.shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double d = grid.D[i];
        const double r = (d * d - c * c) / (d * sg + p.epsilon);
        out[i] = std::exp(-(r * r));
    }
    return out;
}

// Differentiable evaluation on the tape (gradients w.r.t. sigma and center).
inline NodeId gaussian_gain_node(Tape& t, const FrequencyGrid& grid, GaussianFilterParams& p) {
    NodeId sigma = softplus(t, t.param(p.sigma_raw));
    NodeId c2 = square(t, t.param(p.center));
    Tensor d2(grid.D.shape());
    for (int64_t i = 0; i < d2.numel(); ++i) d2[i] = grid.D[i] * grid.D[i];
    NodeId num = sub(t, t.constant(std::move(d2)), bcast(t, c2, grid.D.shape()));
    NodeId den = add(t, smul(t, sigma, t.constant(grid.D)),
                     t.constant(Tensor::full(grid.D.shape(), p.epsilon)));
    return exp_op(t, neg(t, square(t, div(t, num, den))));
}

// ---------------------------------------------------------------------------
// Fourier Unit / Local Fourier Unit
// ---------------------------------------------------------------------------

// Spectral pointwise mixer: FFT -> (Gaussian gain) -> 1x1 conv over the
// stacked real/imaginary channels -> BN -> ReLU -> inverse FFT.
struct FourierUnitParams {
    int64_t channels = 0;  // channel count of the maps this unit processes
    ConvLayer conv;        // 1x1, 2C -> 2C
    BatchNormState bn;     // 2C
    GaussianFilterParams gauss;

    FourierUnitParams() = default;
    FourierUnitParams(const std::string& name, int64_t c, Rng& rng)
        : channels(c),
          conv(name + ".conv", 2 * c, 2 * c, 1, rng),
          bn(name + ".bn", 2 * c),
          gauss(name) {}

    void collect(std::vector<Parameter*>& out) {
        conv.collect(out);
        collect_bn(bn, out);
        gauss.collect(out);
    }
    void visit(const TensorVisitor& v) {
        conv.visit(v);
        visit_bn(bn, v);
        gauss.visit(v);
    }
};

inline NodeId fourier_unit(Tape& t, NodeId x, FourierUnitParams& p, bool use_gaussian, Mode mode) {
    const Tensor& vx = t.value(x);
    if (vx.rank() != 3 || vx.extent(0) != p.channels)
        throw DimError("fourier_unit: input " + shape_str(vx.shape()) + " does not match unit channels " +
                       std::to_string(p.channels));
    const int64_t w = vx.extent(2);
    NodeId s = rfft2_stack(t, x);
    if (use_gaussian) {
        FrequencyGrid grid = frequency_grid(vx.extent(1), w);
        s = mul_gain_hw(t, s, gaussian_gain_node(t, grid, p.gauss));
    }
    s = p.conv.apply(t, s);
    s = batch_norm(t, s, p.bn, mode);
    s = relu(t, s);
    return irfft2_unstack(t, s, w);
}

// Fourier unit conjugated by the quadrant split: the four H/2 x W/2 spatial
// quadrants are stacked along channels (4C), mixed by a FourierUnit on the
// quadrant-sized grid, and tiled back onto the plane. Shape-preserving.
inline NodeId local_fourier_unit(Tape& t, NodeId x, FourierUnitParams& p, bool use_gaussian, Mode mode) {
    const Tensor& vx = t.value(x);
    if (vx.extent(1) % 2 != 0 || vx.extent(2) % 2 != 0)
        throw SizeError("local_fourier_unit: spatial extents must be even, got " + shape_str(vx.shape()));
    if (p.channels != 4 * vx.extent(0))
        throw DimError("local_fourier_unit: unit built for " + std::to_string(p.channels) +
                       " stacked channels, input has " + std::to_string(vx.extent(0)));
    NodeId q = quadrant_stack(t, x);
    q = fourier_unit(t, q, p, use_gaussian, mode);
    return quadrant_unstack(t, q);
}

// ---------------------------------------------------------------------------
// GFFC: two-branch block with cross-branch 3x3 convs and a spectral path
// ---------------------------------------------------------------------------

// round(alpha*C), with at least one local channel whenever alpha < 1.
inline int64_t global_channel_count(double alpha, int64_t c) {
    int64_t cg = static_cast<int64_t>(std::llround(alpha * static_cast<double>(c)));
    cg = std::max<int64_t>(0, std::min(cg, c));
    if (alpha < 1.0) cg = std::min(cg, c - 1);
    return cg;
}

struct GffcParams {
    int64_t channels_in = 0, channels_out = 0;
    double alpha_in = 0.0, alpha_out = 0.0;
    int64_t cg_in = 0, cg_out = 0, cl_in = 0, cl_out = 0;

    std::optional<ConvLayer> l2l, l2g, g2l;  // 3x3 cross-branch convs
    std::optional<ConvLayer> g2g_reduce;     // 1x1 carrier into the spectral path
    std::optional<FourierUnitParams> fu;     // over cg_in channels
    std::optional<FourierUnitParams> lfu;    // over 4*cg_in stacked channels
    std::optional<BatchNormState> bn_local, bn_global;

    GffcParams() = default;
    GffcParams(const std::string& name, int64_t cin, int64_t cout, double a_in, double a_out,
               int64_t k, Rng& rng)
        : channels_in(cin), channels_out(cout), alpha_in(a_in), alpha_out(a_out) {
        cg_in = global_channel_count(a_in, cin);
        cg_out = global_channel_count(a_out, cout);
        cl_in = cin - cg_in;
        cl_out = cout - cg_out;
        if (cl_in > 0 && cl_out > 0) l2l.emplace(name + ".l2l", cl_out, cl_in, k, rng);
        if (cl_in > 0 && cg_out > 0) l2g.emplace(name + ".l2g", cg_out, cl_in, k, rng);
        if (cg_in > 0 && cl_out > 0) g2l.emplace(name + ".g2l", cl_out, cg_in, k, rng);
        if (cg_in > 0 && cg_out > 0) {
            if (cg_in != cg_out)
                throw ConfigError("gffc: spectral path requires cg_in == cg_out, got " +
                                  std::to_string(cg_in) + " vs " + std::to_string(cg_out));
            g2g_reduce.emplace(name + ".g2g.reduce", cg_in, cg_in, 1, rng);
            fu.emplace(name + ".g2g.fu", cg_in, rng);
            lfu.emplace(name + ".g2g.lfu", 4 * cg_in, rng);
        }
        if (cl_out > 0) bn_local.emplace(name + ".bn_local", cl_out);
        if (cg_out > 0) bn_global.emplace(name + ".bn_global", cg_out);
    }

    void collect(std::vector<Parameter*>& out) {
        if (l2l) l2l->collect(out);
        if (l2g) l2g->collect(out);
        if (g2l) g2l->collect(out);
        if (g2g_reduce) g2g_reduce->collect(out);
        if (fu) fu->collect(out);
        if (lfu) lfu->collect(out);
        if (bn_local) collect_bn(*bn_local, out);
        if (bn_global) collect_bn(*bn_global, out);
    }
    void visit(const TensorVisitor& v) {
        if (l2l) l2l->visit(v);
        if (l2g) l2g->visit(v);
        if (g2l) g2l->visit(v);
        if (g2g_reduce) g2g_reduce->visit(v);
        if (fu) fu->visit(v);
        if (lfu) lfu->visit(v);
        if (bn_local) visit_bn(*bn_local, v);
        if (bn_global) visit_bn(*bn_global, v);
    }

    std::vector<GaussianFilterParams*> gaussians() {
        std::vector<GaussianFilterParams*> out;
        if (fu) out.push_back(&fu->gauss);
        if (lfu) out.push_back(&lfu->gauss);
        return out;
    }
};

// Branch pair flowing through a GFFC; global == -1 when the branch is empty.
struct BranchPair {
    NodeId local = -1;
    NodeId global = -1;
};

// spectral_transform(x_g) = r + FU(r) + LFU(r), r = 1x1 reduction of x_g
inline NodeId spectral_transform(Tape& t, NodeId x_global, GffcParams& p, bool use_gaussian, Mode mode) {
    NodeId r = p.g2g_reduce->apply(t, x_global);
    NodeId s = add(t, fourier_unit(t, r, *p.fu, use_gaussian, mode),
                   local_fourier_unit(t, r, *p.lfu, use_gaussian, mode));
    return add(t, r, s);
}

// The four-path mixing sums, before any normalization/activation:
//   local  = l2l(x_l) + g2l(x_g)
//   global = l2g(x_l) + spectral_transform(x_g)
inline BranchPair gffc_mix(Tape& t, BranchPair x, GffcParams& p, bool use_gaussian, Mode mode) {
    if ((p.cl_in > 0) != (x.local >= 0) || (p.cg_in > 0) != (x.global >= 0))
        throw ConfigError("gffc: branch presence does not match channel split");
    if (x.local >= 0 && t.value(x.local).extent(0) != p.cl_in)
        throw ConfigError("gffc: local input has " + std::to_string(t.value(x.local).extent(0)) +
                          " channels, split expects " + std::to_string(p.cl_in));
    if (x.global >= 0 && t.value(x.global).extent(0) != p.cg_in)
        throw ConfigError("gffc: global input has " + std::to_string(t.value(x.global).extent(0)) +
                          " channels, split expects " + std::to_string(p.cg_in));

    BranchPair out;
    if (p.cl_out > 0) {
        NodeId acc = -1;
        if (p.l2l) acc = p.l2l->apply(t, x.local);
        if (p.g2l) {
            NodeId g = p.g2l->apply(t, x.global);
            acc = acc >= 0 ? add(t, acc, g) : g;
        }
        out.local = acc;
    }
    if (p.cg_out > 0) {
        NodeId acc = -1;
        if (p.l2g) acc = p.l2g->apply(t, x.local);
        if (p.cg_in > 0) {
            NodeId st = spectral_transform(t, x.global, p, use_gaussian, mode);
            acc = acc >= 0 ? add(t, acc, st) : st;
        }
        out.global = acc;
    }
    return out;
}

// Standalone GFFC block: per-branch BN(ReLU(mixing sums)). With
// alpha_in == alpha_out == 0 this degenerates to plain conv -> ReLU -> BN.
inline BranchPair gffc_block(Tape& t, BranchPair x, GffcParams& p, bool use_gaussian, Mode mode) {
    BranchPair mixed = gffc_mix(t, x, p, use_gaussian, mode);
    BranchPair out;
    if (mixed.local >= 0) out.local = batch_norm(t, relu(t, mixed.local), *p.bn_local, mode);
    if (mixed.global >= 0) out.global = batch_norm(t, relu(t, mixed.global), *p.bn_global, mode);
    return out;
}

}  // namespace spectral
}  // namespace findnet
