#pragma once

#include <cmath>
#include <utility>

#include "findnet/fft.hpp"
#include "findnet/tape.hpp"
#include "findnet/tensor.hpp"

namespace findnet {

enum class Mode { train, infer };

// ---------------------------------------------------------------------------
// Elementwise and reduction operators
// ---------------------------------------------------------------------------

inline NodeId add(Tape& t, NodeId a, NodeId b) {
    require_same_shape(t.value(a), t.value(b), "add");
    Tensor out = t.value(a) + t.value(b);
    return t.push("add", {a, b}, std::move(out), [a, b](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor &ga = tp.grad(a), &gb = tp.grad(b);
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

inline NodeId sub(Tape& t, NodeId a, NodeId b) {
    require_same_shape(t.value(a), t.value(b), "sub");
    Tensor out = t.value(a) - t.value(b);
    return t.push("sub", {a, b}, std::move(out), [a, b](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor &ga = tp.grad(a), &gb = tp.grad(b);
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

inline NodeId mul(Tape& t, NodeId a, NodeId b) {
    require_same_shape(t.value(a), t.value(b), "mul");
    Tensor out = t.value(a) * t.value(b);
    return t.push("mul", {a, b}, std::move(out), [a, b](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor &va = tp.value(a), &vb = tp.value(b);
        Tensor &ga = tp.grad(a), &gb = tp.grad(b);
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i] * vb[i];
            gb[i] += g[i] * va[i];
        }
    });
}

inline NodeId div(Tape& t, NodeId a, NodeId b) {
    require_same_shape(t.value(a), t.value(b), "div");
    Tensor out(t.value(a).shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = t.value(a)[i] / t.value(b)[i];
    return t.push("div", {a, b}, std::move(out), [a, b](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor &vb = tp.value(b), &vo = tp.value(self);
        Tensor &ga = tp.grad(a), &gb = tp.grad(b);
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i] / vb[i];
            gb[i] -= g[i] * vo[i] / vb[i];
        }
    });
}

inline NodeId scale(Tape& t, NodeId a, double s) {
    Tensor out = s * t.value(a);
    return t.push("scale", {a}, std::move(out), [a, s](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += s * g[i];
    });
}

inline NodeId neg(Tape& t, NodeId a) { return scale(t, a, -1.0); }

// scalar node [1] times tensor node, broadcast
inline NodeId smul(Tape& t, NodeId s, NodeId x) {
    if (t.value(s).numel() != 1) throw ContractError("smul: scale operand must be scalar");
    double sv = t.value(s)[0];
    Tensor out = sv * t.value(x);
    return t.push("smul", {s, x}, std::move(out), [s, x, sv](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor& vx = tp.value(x);
        Tensor &gs = tp.grad(s), &gx = tp.grad(x);
        double acc = 0.0;
        for (int64_t i = 0; i < g.numel(); ++i) {
            acc += g[i] * vx[i];
            gx[i] += sv * g[i];
        }
        gs[0] += acc;
    });
}

// broadcast a scalar node to a full shape
inline NodeId bcast(Tape& t, NodeId s, Shape shape) {
    if (t.value(s).numel() != 1) throw ContractError("bcast: operand must be scalar");
    Tensor out = Tensor::full(std::move(shape), t.value(s)[0]);
    return t.push("bcast", {s}, std::move(out), [s](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        double acc = 0.0;
        for (int64_t i = 0; i < g.numel(); ++i) acc += g[i];
        tp.grad(s)[0] += acc;
    });
}

inline NodeId relu(Tape& t, NodeId a) {
    Tensor out(t.value(a).shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = t.value(a)[i] > 0.0 ? t.value(a)[i] : 0.0;
    return t.push("relu", {a}, std::move(out), [a](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor& va = tp.value(a);
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i)
            if (va[i] > 0.0) ga[i] += g[i];  // subgradient at 0 is 0
    });
}

inline NodeId abs_val(Tape& t, NodeId a) {
    Tensor out(t.value(a).shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(t.value(a)[i]);
    return t.push("abs", {a}, std::move(out), [a](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor& va = tp.value(a);
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) {
            if (va[i] > 0.0)
                ga[i] += g[i];
            else if (va[i] < 0.0)
                ga[i] -= g[i];  // subgradient at 0 is 0
        }
    });
}

inline NodeId square(Tape& t, NodeId a) {
    Tensor out(t.value(a).shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = t.value(a)[i] * t.value(a)[i];
    return t.push("square", {a}, std::move(out), [a](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor& va = tp.value(a);
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += 2.0 * va[i] * g[i];
    });
}

inline NodeId exp_op(Tape& t, NodeId a) {
    Tensor out(t.value(a).shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(t.value(a)[i]);
    return t.push("exp", {a}, std::move(out), [a](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor& vo = tp.value(self);
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += vo[i] * g[i];
    });
}

namespace detail {
inline double softplus_val(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}
inline double sigmoid_val(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace detail

inline NodeId softplus(Tape& t, NodeId a) {
    Tensor out(t.value(a).shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = detail::softplus_val(t.value(a)[i]);
    return t.push("softplus", {a}, std::move(out), [a](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor& va = tp.value(a);
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += detail::sigmoid_val(va[i]) * g[i];
    });
}

inline NodeId sigmoid(Tape& t, NodeId a) {
    Tensor out(t.value(a).shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = detail::sigmoid_val(t.value(a)[i]);
    return t.push("sigmoid", {a}, std::move(out), [a](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor& vo = tp.value(self);
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += vo[i] * (1.0 - vo[i]) * g[i];
    });
}

inline NodeId sum_all(Tape& t, NodeId a) {
    double acc = 0.0;
    for (int64_t i = 0; i < t.value(a).numel(); ++i) acc += t.value(a)[i];
    return t.push("sum", {a}, Tensor::scalar(acc), [a](Tape& tp, NodeId self) {
        double g = tp.grad(self)[0];
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

// shape metadata change only; same data, gradient reshaped back
inline NodeId reshape(Tape& t, NodeId a, Shape shape) {
    Tensor out = t.value(a).reshaped(shape);
    return t.push("reshape", {a}, std::move(out), [a](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

// multiply by a constant (non-differentiated) tensor, e.g. the non-metal mask
inline NodeId mul_const(Tape& t, NodeId a, const Tensor& c) {
    require_same_shape(t.value(a), c, "mul_const");
    Tensor out = t.value(a) * c;
    Tensor cc = c;  // keep alive for backward
    return t.push("mul_const", {a}, std::move(out), [a, cc = std::move(cc)](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * cc[i];
    });
}

// ---------------------------------------------------------------------------
// Convolution (stride 1, zero padding)
// ---------------------------------------------------------------------------

namespace detail {

inline void check_conv_args(const Tensor& x, const Tensor& k, int64_t padding, const char* what) {
    if (x.rank() != 3) throw DimError(std::string(what) + ": input must be [C,H,W], got " + shape_str(x.shape()));
    if (k.rank() != 4) throw DimError(std::string(what) + ": kernels must be [Cout,Cin,k,k], got " + shape_str(k.shape()));
    if (k.extent(2) != k.extent(3) || k.extent(2) % 2 == 0)
        throw DimError(std::string(what) + ": kernel window must be square and odd, got " + shape_str(k.shape()));
    if (padding < 0) throw DimError(std::string(what) + ": padding must be nonnegative");
}

// out[co,y,x] = sum_ci sum_ab in[ci, y+a-p, x+b-p] * K[co,ci,a,b]
inline Tensor conv2d_fwd(const Tensor& x, const Tensor& k, int64_t p) {
    const int64_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
    const int64_t cout = k.extent(0), kk = k.extent(2);
    const int64_t ho = h + 2 * p - kk + 1, wo = w + 2 * p - kk + 1;
    if (ho < 1 || wo < 1) throw DimError("conv2d: output would be empty");
    Tensor out(Shape{cout, ho, wo});
    for (int64_t co = 0; co < cout; ++co)
        for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t a = 0; a < kk; ++a)
                for (int64_t b = 0; b < kk; ++b) {
                    const double wgt = k.at(co, ci, a, b);
                    if (wgt == 0.0) continue;
                    const int64_t y0 = std::max<int64_t>(0, p - a), y1 = std::min(ho, h + p - a);
                    const int64_t x0 = std::max<int64_t>(0, p - b), x1 = std::min(wo, w + p - b);
                    for (int64_t y = y0; y < y1; ++y) {
                        const double* src = x.data() + (ci * h + (y + a - p)) * w + (x0 + b - p);
                        double* dst = out.data() + (co * ho + y) * wo + x0;
                        for (int64_t i = 0; i < x1 - x0; ++i) dst[i] += wgt * src[i];
                    }
                }
    return out;
}

// adjoint of conv2d_fwd in its first argument:
// out[ci,m,n] = sum_co sum_ab in[co, m-a+p, n-b+p] * K[co,ci,a,b]
inline Tensor conv2d_transpose_fwd(const Tensor& x, const Tensor& k, int64_t p) {
    const int64_t cout = x.extent(0), ho = x.extent(1), wo = x.extent(2);
    const int64_t cin = k.extent(1), kk = k.extent(2);
    const int64_t h = ho + kk - 1 - 2 * p, w = wo + kk - 1 - 2 * p;
    if (h < 1 || w < 1) throw DimError("conv2d_transpose: output would be empty");
    Tensor out(Shape{cin, h, w});
    for (int64_t co = 0; co < cout; ++co)
        for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t a = 0; a < kk; ++a)
                for (int64_t b = 0; b < kk; ++b) {
                    const double wgt = k.at(co, ci, a, b);
                    if (wgt == 0.0) continue;
                    const int64_t m0 = std::max<int64_t>(0, a - p), m1 = std::min(h, ho + a - p);
                    const int64_t n0 = std::max<int64_t>(0, b - p), n1 = std::min(w, wo + b - p);
                    for (int64_t m = m0; m < m1; ++m) {
                        const double* src = x.data() + (co * ho + (m - a + p)) * wo + (n0 - b + p);
                        double* dst = out.data() + (ci * h + m) * w + n0;
                        for (int64_t i = 0; i < n1 - n0; ++i) dst[i] += wgt * src[i];
                    }
                }
    return out;
}

// dK[co,ci,a,b] = sum_{y,x} g[co,y,x] * in[ci, y+a-p, x+b-p]
inline void conv2d_kernel_grad(const Tensor& g, const Tensor& x, int64_t p, Tensor& dk) {
    const int64_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
    const int64_t cout = g.extent(0), ho = g.extent(1), wo = g.extent(2);
    const int64_t kk = dk.extent(2);
    for (int64_t co = 0; co < cout; ++co)
        for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t a = 0; a < kk; ++a)
                for (int64_t b = 0; b < kk; ++b) {
                    const int64_t y0 = std::max<int64_t>(0, p - a), y1 = std::min(ho, h + p - a);
                    const int64_t x0 = std::max<int64_t>(0, p - b), x1 = std::min(wo, w + p - b);
                    double acc = 0.0;
                    for (int64_t y = y0; y < y1; ++y) {
                        const double* gs = g.data() + (co * ho + y) * wo + x0;
                        const double* xs = x.data() + (ci * h + (y + a - p)) * w + (x0 + b - p);
                        for (int64_t i = 0; i < x1 - x0; ++i) acc += gs[i] * xs[i];
                    }
                    dk.at(co, ci, a, b) += acc;
                }
}

}  // namespace detail

// Differentiable 2-D cross-correlation; input [Cin,H,W], kernels [Cout,Cin,k,k].
inline NodeId conv2d(Tape& t, NodeId x, NodeId k, int64_t padding) {
    const Tensor &vx = t.value(x), &vk = t.value(k);
    detail::check_conv_args(vx, vk, padding, "conv2d");
    if (vk.extent(1) != vx.extent(0))
        throw DimError("conv2d: kernel Cin " + std::to_string(vk.extent(1)) + " != input channels " +
                       std::to_string(vx.extent(0)));
    Tensor out = detail::conv2d_fwd(vx, vk, padding);
    return t.push("conv2d", {x, k}, std::move(out), [x, k, padding](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor gx = detail::conv2d_transpose_fwd(g, tp.value(k), padding);
        Tensor& ax = tp.grad(x);
        for (int64_t i = 0; i < ax.numel(); ++i) ax[i] += gx[i];
        detail::conv2d_kernel_grad(g, tp.value(x), padding, tp.grad(k));
    });
}

// Exact adjoint of conv2d: <conv2d(x,K), y> == <x, conv2d_transpose(y,K)>.
// Input [Cout,H',W'], kernels [Cout,Cin,k,k], output [Cin,H,W].
inline NodeId conv2d_transpose(Tape& t, NodeId x, NodeId k, int64_t padding) {
    const Tensor &vx = t.value(x), &vk = t.value(k);
    detail::check_conv_args(vx, vk, padding, "conv2d_transpose");
    if (vk.extent(0) != vx.extent(0))
        throw DimError("conv2d_transpose: kernel Cout " + std::to_string(vk.extent(0)) +
                       " != input channels " + std::to_string(vx.extent(0)));
    Tensor out = detail::conv2d_transpose_fwd(vx, vk, padding);
    return t.push("conv2d_transpose", {x, k}, std::move(out), [x, k, padding](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor gx = detail::conv2d_fwd(g, tp.value(k), padding);
        Tensor& ax = tp.grad(x);
        for (int64_t i = 0; i < ax.numel(); ++i) ax[i] += gx[i];
        // dK[co,ci,a,b] = sum_{m,n} g[ci,m,n] * in[co, m-a+p, n-b+p]
        detail::conv2d_kernel_grad(tp.value(x), g, padding, tp.grad(k));
    });
}

// per-output-channel bias
inline NodeId add_bias(Tape& t, NodeId x, NodeId b) {
    const Tensor &vx = t.value(x), &vb = t.value(b);
    if (vb.rank() != 1 || vb.extent(0) != vx.extent(0))
        throw DimError("add_bias: bias shape " + shape_str(vb.shape()) + " does not match channels of " +
                       shape_str(vx.shape()));
    Tensor out = vx;
    const int64_t c = vx.extent(0), plane = vx.numel() / c;
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < plane; ++i) out[ch * plane + i] += vb[ch];
    return t.push("add_bias", {x, b}, std::move(out), [x, b, c, plane](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor &gx = tp.grad(x), &gb = tp.grad(b);
        for (int64_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (int64_t i = 0; i < plane; ++i) {
                gx[ch * plane + i] += g[ch * plane + i];
                acc += g[ch * plane + i];
            }
            gb[ch] += acc;
        }
    });
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

// Learnable scale/shift plus running statistics for one normalized axis.
struct BatchNormState {
    std::string name;
    Parameter gamma;
    Parameter beta;
    Tensor running_mean;
    Tensor running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    BatchNormState() = default;
    BatchNormState(const std::string& name_, int64_t channels)
        : name(name_),
          gamma(name_ + ".gamma", Tensor::ones({channels})),
          beta(name_ + ".beta", Tensor::zeros({channels})),
          running_mean(Tensor::zeros({channels})),
          running_var(Tensor::ones({channels})) {}

    int64_t channels() const { return gamma.value.extent(0); }

    // Exact pass-through in infer mode: sqrt(running_var + eps) == 1.
    void set_identity_infer() {
        std::fill(running_mean.vec().begin(), running_mean.vec().end(), 0.0);
        std::fill(running_var.vec().begin(), running_var.vec().end(), 1.0 - eps);
        std::fill(gamma.value.vec().begin(), gamma.value.vec().end(), 1.0);
        std::fill(beta.value.vec().begin(), beta.value.vec().end(), 0.0);
    }
};

// Train mode normalizes with batch statistics over H*W per channel and
// updates the running statistics (momentum update, unbiased variance);
// infer mode uses the running statistics. Input [C,H,W].
inline NodeId batch_norm(Tape& t, NodeId x, BatchNormState& st, Mode mode) {
    const Tensor& vx = t.value(x);
    if (vx.rank() != 3) throw DimError("batch_norm: input must be [C,H,W], got " + shape_str(vx.shape()));
    const int64_t c = vx.extent(0);
    if (c != st.channels())
        throw DimError("batch_norm: input channels " + std::to_string(c) + " != state channels " +
                       std::to_string(st.channels()));
    const int64_t n = vx.numel() / c;
    if (mode == Mode::train && n < 2) throw ContractError("batch_norm: train mode needs at least 2 values per channel");

    NodeId gamma = t.param(st.gamma);
    NodeId beta = t.param(st.beta);

    Tensor out(vx.shape());
    std::vector<double> mean(static_cast<size_t>(c)), istd(static_cast<size_t>(c));
    if (mode == Mode::train) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* src = vx.data() + ch * n;
            double mu = 0.0;
            for (int64_t i = 0; i < n; ++i) mu += src[i];
            mu /= static_cast<double>(n);
            double var = 0.0;
            for (int64_t i = 0; i < n; ++i) var += (src[i] - mu) * (src[i] - mu);
            var /= static_cast<double>(n);
            mean[static_cast<size_t>(ch)] = mu;
            istd[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var + st.eps);
            st.running_mean[ch] = (1.0 - st.momentum) * st.running_mean[ch] + st.momentum * mu;
            const double var_unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
            st.running_var[ch] = (1.0 - st.momentum) * st.running_var[ch] + st.momentum * var_unbiased;
        }
    } else {
        for (int64_t ch = 0; ch < c; ++ch) {
            mean[static_cast<size_t>(ch)] = st.running_mean[ch];
            istd[static_cast<size_t>(ch)] = 1.0 / std::sqrt(st.running_var[ch] + st.eps);
        }
    }
    for (int64_t ch = 0; ch < c; ++ch) {
        const double mu = mean[static_cast<size_t>(ch)], is = istd[static_cast<size_t>(ch)];
        const double gm = t.value(gamma)[ch], bt = t.value(beta)[ch];
        const double* src = vx.data() + ch * n;
        double* dst = out.data() + ch * n;
        for (int64_t i = 0; i < n; ++i) dst[i] = gm * ((src[i] - mu) * is) + bt;
    }

    const bool train = (mode == Mode::train);
    return t.push("batch_norm", {x, gamma, beta}, std::move(out),
                  [x, gamma, beta, c, n, train, mean = std::move(mean),
                   istd = std::move(istd)](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor& vx2 = tp.value(x);
        Tensor &gx = tp.grad(x), &gg = tp.grad(gamma), &gb = tp.grad(beta);
        const Tensor& vgamma = tp.value(gamma);
        for (int64_t ch = 0; ch < c; ++ch) {
            const double mu = mean[static_cast<size_t>(ch)], is = istd[static_cast<size_t>(ch)];
            const double gm = vgamma[ch];
            const double* gs = g.data() + ch * n;
            const double* xs = vx2.data() + ch * n;
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const double xhat = (xs[i] - mu) * is;
                sum_g += gs[i];
                sum_gx += gs[i] * xhat;
            }
            gb[ch] += sum_g;
            gg[ch] += sum_gx;
            double* gxs = gx.data() + ch * n;
            if (train) {
                const double mg = sum_g / static_cast<double>(n);
                const double mgx = sum_gx / static_cast<double>(n);
                for (int64_t i = 0; i < n; ++i) {
                    const double xhat = (xs[i] - mu) * is;
                    gxs[i] += gm * is * (gs[i] - mg - xhat * mgx);
                }
            } else {
                for (int64_t i = 0; i < n; ++i) gxs[i] += gm * is * gs[i];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Spectral, channel and spatial rearrangement operators
// ---------------------------------------------------------------------------

// [C,H,W] -> [2C,H,W/2+1] half spectrum, real parts then imaginary parts
inline NodeId rfft2_stack(Tape& t, NodeId x) {
    const Tensor& vx = t.value(x);
    if (vx.rank() != 3) throw DimError("rfft2_stack: input must be [C,H,W]");
    const int64_t w = vx.extent(2);
    Tensor out = rfft2_stacked(vx);
    return t.push("rfft2", {x}, std::move(out), [x, w](Tape& tp, NodeId self) {
        Tensor gx = rfft2_stacked_adjoint(tp.grad(self), w);
        Tensor& ax = tp.grad(x);
        for (int64_t i = 0; i < ax.numel(); ++i) ax[i] += gx[i];
    });
}

// [2C,H,W/2+1] -> [C,H,W] real inverse via conjugate-symmetric extension
inline NodeId irfft2_unstack(Tape& t, NodeId s, int64_t w_full) {
    Tensor out = irfft2_stacked(t.value(s), w_full);
    return t.push("irfft2", {s}, std::move(out), [s](Tape& tp, NodeId self) {
        Tensor gs = irfft2_stacked_adjoint(tp.grad(self));
        Tensor& as = tp.grad(s);
        for (int64_t i = 0; i < as.numel(); ++i) as[i] += gs[i];
    });
}

// multiply every channel of x [C,H,W] by a gain map [H,W]
inline NodeId mul_gain_hw(Tape& t, NodeId x, NodeId gain) {
    const Tensor &vx = t.value(x), &vg = t.value(gain);
    if (vg.rank() != 2 || vg.extent(0) != vx.extent(1) || vg.extent(1) != vx.extent(2))
        throw DimError("mul_gain_hw: gain " + shape_str(vg.shape()) + " does not match " + shape_str(vx.shape()));
    const int64_t c = vx.extent(0), plane = vg.numel();
    Tensor out(vx.shape());
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < plane; ++i) out[ch * plane + i] = vx[ch * plane + i] * vg[i];
    return t.push("mul_gain", {x, gain}, std::move(out), [x, gain, c, plane](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        const Tensor &vx2 = tp.value(x), &vg2 = tp.value(gain);
        Tensor &gx = tp.grad(x), &gg = tp.grad(gain);
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t i = 0; i < plane; ++i) {
                gx[ch * plane + i] += g[ch * plane + i] * vg2[i];
                gg[i] += g[ch * plane + i] * vx2[ch * plane + i];
            }
    });
}

inline NodeId concat_ch(Tape& t, NodeId a, NodeId b) {
    const Tensor &va = t.value(a), &vb = t.value(b);
    if (va.rank() != 3 || vb.rank() != 3 || va.extent(1) != vb.extent(1) || va.extent(2) != vb.extent(2))
        throw DimError("concat_ch: incompatible shapes " + shape_str(va.shape()) + " / " + shape_str(vb.shape()));
    const int64_t ca = va.extent(0), cb = vb.extent(0);
    Tensor out(Shape{ca + cb, va.extent(1), va.extent(2)});
    std::copy(va.data(), va.data() + va.numel(), out.data());
    std::copy(vb.data(), vb.data() + vb.numel(), out.data() + va.numel());
    return t.push("concat_ch", {a, b}, std::move(out), [a, b](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor &ga = tp.grad(a), &gb = tp.grad(b);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g[i];
        for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += g[ga.numel() + i];
    });
}

inline NodeId slice_ch(Tape& t, NodeId x, int64_t from, int64_t to) {
    const Tensor& vx = t.value(x);
    if (vx.rank() != 3 || from < 0 || to > vx.extent(0) || from >= to)
        throw DimError("slice_ch: invalid range [" + std::to_string(from) + "," + std::to_string(to) +
                       ") for " + shape_str(vx.shape()));
    const int64_t plane = vx.extent(1) * vx.extent(2);
    Tensor out(Shape{to - from, vx.extent(1), vx.extent(2)});
    std::copy(vx.data() + from * plane, vx.data() + to * plane, out.data());
    return t.push("slice_ch", {x}, std::move(out), [x, from, plane](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad(x);
        for (int64_t i = 0; i < g.numel(); ++i) gx[from * plane + i] += g[i];
    });
}

// [C,H,W] -> [4C,H/2,W/2]; channel groups are the TL, TR, BL, BR quadrants
inline NodeId quadrant_stack(Tape& t, NodeId x) {
    const Tensor& vx = t.value(x);
    const int64_t c = vx.extent(0), h = vx.extent(1), w = vx.extent(2);
    if (h % 2 != 0 || w % 2 != 0) throw SizeError("quadrant_stack: extents must be even, got " + shape_str(vx.shape()));
    const int64_t hh = h / 2, ww = w / 2;
    Tensor out(Shape{4 * c, hh, ww});
    for (int64_t q = 0; q < 4; ++q) {
        const int64_t oy = (q / 2) * hh, ox = (q % 2) * ww;
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < hh; ++y)
                for (int64_t xq = 0; xq < ww; ++xq)
                    out.at(q * c + ch, y, xq) = vx.at(ch, oy + y, ox + xq);
    }
    return t.push("quadrant_stack", {x}, std::move(out), [x, c, hh, ww](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad(x);
        for (int64_t q = 0; q < 4; ++q) {
            const int64_t oy = (q / 2) * hh, ox = (q % 2) * ww;
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < hh; ++y)
                    for (int64_t xq = 0; xq < ww; ++xq)
                        gx.at(ch, oy + y, ox + xq) += g.at(q * c + ch, y, xq);
        }
    });
}

// inverse of quadrant_stack: tiles the four channel groups back onto the plane
inline NodeId quadrant_unstack(Tape& t, NodeId x) {
    const Tensor& vx = t.value(x);
    if (vx.extent(0) % 4 != 0) throw DimError("quadrant_unstack: channel count must be divisible by 4");
    const int64_t c = vx.extent(0) / 4, hh = vx.extent(1), ww = vx.extent(2);
    Tensor out(Shape{c, 2 * hh, 2 * ww});
    for (int64_t q = 0; q < 4; ++q) {
        const int64_t oy = (q / 2) * hh, ox = (q % 2) * ww;
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < hh; ++y)
                for (int64_t xq = 0; xq < ww; ++xq)
                    out.at(ch, oy + y, ox + xq) = vx.at(q * c + ch, y, xq);
    }
    return t.push("quadrant_unstack", {x}, std::move(out), [x, c, hh, ww](Tape& tp, NodeId self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad(x);
        for (int64_t q = 0; q < 4; ++q) {
            const int64_t oy = (q / 2) * hh, ox = (q % 2) * ww;
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < hh; ++y)
                    for (int64_t xq = 0; xq < ww; ++xq)
                        gx.at(q * c + ch, y, xq) += g.at(ch, oy + y, ox + xq);
        }
    });
}

}  // namespace findnet
