#pragma once

#include <complex>
#include <vector>

#include "findnet/tensor.hpp"

namespace findnet {

namespace detail {

// Iterative radix-2 Cooley-Tukey, in place, unnormalized. n must be a power
// of two. inverse flips the twiddle sign; scaling is left to the caller.
inline void fft_radix2(std::complex<double>* a, int64_t n, bool inverse) {
    if (n <= 1) return;
    for (int64_t i = 1, j = 0; i < n; ++i) {  // bit-reversal permutation
        int64_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.14159265358979323846264338327950288;
    for (int64_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (int64_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int64_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// 2-D transform of an H x W row-major complex grid: rows, then columns.
inline void fft2_grid(std::vector<std::complex<double>>& g, int64_t h, int64_t w, bool inverse) {
    for (int64_t r = 0; r < h; ++r) fft_radix2(g.data() + r * w, w, inverse);
    std::vector<std::complex<double>> col(static_cast<size_t>(h));
    for (int64_t c = 0; c < w; ++c) {
        for (int64_t r = 0; r < h; ++r) col[static_cast<size_t>(r)] = g[static_cast<size_t>(r * w + c)];
        fft_radix2(col.data(), h, inverse);
        for (int64_t r = 0; r < h; ++r) g[static_cast<size_t>(r * w + c)] = col[static_cast<size_t>(r)];
    }
}

}  // namespace detail

// Real-to-complex 2-D DFT over the last two axes of a [C,H,W] tensor.
// Unnormalized forward; only the non-redundant half spectrum (W/2+1 columns)
// is kept. H and W must be powers of two.
inline ComplexTensor fft2(const Tensor& x) {
    if (x.rank() != 3) throw DimError("fft2: expected [C,H,W], got " + shape_str(x.shape()));
    const int64_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    require_pow2_hw(h, w, "fft2");
    const int64_t wh = w / 2 + 1;
    ComplexTensor out(Shape{c, h, wh});
    std::vector<std::complex<double>> g(static_cast<size_t>(h * w));
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t i = 0; i < h * w; ++i) g[static_cast<size_t>(i)] = {x[ch * h * w + i], 0.0};
        detail::fft2_grid(g, h, w, false);
        for (int64_t u = 0; u < h; ++u)
            for (int64_t v = 0; v < wh; ++v) {
                out.re.at(ch, u, v) = g[static_cast<size_t>(u * w + v)].real();
                out.im.at(ch, u, v) = g[static_cast<size_t>(u * w + v)].imag();
            }
    }
    return out;
}

// Companion inverse: conjugate-symmetric extension of the half spectrum,
// normalized by 1/(H*W), real part of the result. ifft2(fft2(x)) == x to
// round-off. w_full is the original width (the half layout is ambiguous).
inline Tensor ifft2(const ComplexTensor& s, int64_t w_full) {
    if (s.re.rank() != 3) throw DimError("ifft2: expected [C,H,W/2+1], got " + shape_str(s.shape()));
    const int64_t c = s.re.extent(0), h = s.re.extent(1), wh = s.re.extent(2);
    if (wh != w_full / 2 + 1)
        throw DimError("ifft2: spectrum has " + std::to_string(wh) + " columns, expected " +
                       std::to_string(w_full / 2 + 1));
    require_pow2_hw(h, w_full, "ifft2");
    Tensor out(Shape{c, h, w_full});
    std::vector<std::complex<double>> g(static_cast<size_t>(h * w_full));
    const double scale = 1.0 / static_cast<double>(h * w_full);
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t u = 0; u < h; ++u) {
            for (int64_t v = 0; v < wh; ++v)
                g[static_cast<size_t>(u * w_full + v)] = {s.re.at(ch, u, v), s.im.at(ch, u, v)};
            for (int64_t v = wh; v < w_full; ++v) {
                int64_t mu = (h - u) % h, mv = w_full - v;
                g[static_cast<size_t>(u * w_full + v)] = {s.re.at(ch, mu, mv), -s.im.at(ch, mu, mv)};
            }
        }
        detail::fft2_grid(g, h, w_full, true);
        for (int64_t i = 0; i < h * w_full; ++i)
            out[ch * h * w_full + i] = scale * g[static_cast<size_t>(i)].real();
    }
    return out;
}

// --- Stacked-channel views used by the differentiable spectral ops. -------
// Convention: a half spectrum of a [C,H,W] map is carried as a real
// [2C,H,W/2+1] tensor, first C channels real parts, last C imaginary parts.

inline Tensor rfft2_stacked(const Tensor& x) {
    ComplexTensor s = fft2(x);
    const int64_t c = x.extent(0), h = x.extent(1), wh = s.re.extent(2);
    Tensor out(Shape{2 * c, h, wh});
    const int64_t plane = h * wh;
    for (int64_t i = 0; i < c * plane; ++i) {
        out[i] = s.re[i];
        out[c * plane + i] = s.im[i];
    }
    return out;
}

inline Tensor irfft2_stacked(const Tensor& s, int64_t w_full) {
    if (s.rank() != 3 || s.extent(0) % 2 != 0)
        throw DimError("irfft2_stacked: expected [2C,H,W/2+1], got " + shape_str(s.shape()));
    const int64_t c = s.extent(0) / 2, h = s.extent(1), wh = s.extent(2);
    ComplexTensor spec(Shape{c, h, wh});
    const int64_t plane = h * wh;
    for (int64_t i = 0; i < c * plane; ++i) {
        spec.re[i] = s[i];
        spec.im[i] = s[c * plane + i];
    }
    return ifft2(spec, w_full);
}

// Adjoint of rfft2_stacked: zero-extend the cotangent onto the full grid,
// unnormalized inverse transform, real part.
inline Tensor rfft2_stacked_adjoint(const Tensor& g, int64_t w_full) {
    const int64_t c = g.extent(0) / 2, h = g.extent(1), wh = g.extent(2);
    Tensor out(Shape{c, h, w_full});
    std::vector<std::complex<double>> grid(static_cast<size_t>(h * w_full));
    const int64_t plane = h * wh;
    for (int64_t ch = 0; ch < c; ++ch) {
        std::fill(grid.begin(), grid.end(), std::complex<double>(0.0, 0.0));
        for (int64_t u = 0; u < h; ++u)
            for (int64_t v = 0; v < wh; ++v)
                grid[static_cast<size_t>(u * w_full + v)] = {g[ch * plane + u * wh + v],
                                                             g[(c + ch) * plane + u * wh + v]};
        detail::fft2_grid(grid, h, w_full, true);
        for (int64_t i = 0; i < h * w_full; ++i)
            out[ch * h * w_full + i] = grid[static_cast<size_t>(i)].real();
    }
    return out;
}

// Adjoint of irfft2_stacked: forward transform of the cotangent, scaled by
// w_v/(H*W) where w_v is 2 on interior columns (their mirror is implicit)
// and 1 on the self-conjugate columns v=0 and v=W/2.
inline Tensor irfft2_stacked_adjoint(const Tensor& g) {
    const int64_t c = g.extent(0), h = g.extent(1), w = g.extent(2);
    ComplexTensor s = fft2(g);
    const int64_t wh = w / 2 + 1;
    Tensor out(Shape{2 * c, h, wh});
    const int64_t plane = h * wh;
    const double norm = 1.0 / static_cast<double>(h * w);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t u = 0; u < h; ++u)
            for (int64_t v = 0; v < wh; ++v) {
                double wv = (v == 0 || v == w / 2) ? 1.0 : 2.0;
                out[ch * plane + u * wh + v] = wv * norm * s.re.at(ch, u, v);
                out[(c + ch) * plane + u * wh + v] = wv * norm * s.im.at(ch, u, v);
            }
    return out;
}

}  // namespace findnet
