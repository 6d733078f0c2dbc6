#pragma once

#include <complex>
#include <vector>

#include "findnet/rng.hpp"
#include "findnet/tensor.hpp"

namespace test_helpers {

using findnet::Rng;
using findnet::Shape;
using findnet::Tensor;

// O(N^2) dense 2-D DFT, independent of the library FFT path.
inline std::vector<std::complex<double>> dense_dft2(const Tensor& img) {
    const int64_t h = img.extent(0), w = img.extent(1);
    std::vector<std::complex<double>> out(static_cast<size_t>(h * w));
    const double pi = 3.14159265358979323846264338327950288;
    for (int64_t u = 0; u < h; ++u)
        for (int64_t v = 0; v < w; ++v) {
            std::complex<double> acc(0.0, 0.0);
            for (int64_t m = 0; m < h; ++m)
                for (int64_t n = 0; n < w; ++n) {
                    const double ang = -2.0 * pi * (static_cast<double>(u * m) / h + static_cast<double>(v * n) / w);
                    acc += img.at(m, n) * std::complex<double>(std::cos(ang), std::sin(ang));
                }
            out[static_cast<size_t>(u * w + v)] = acc;
        }
    return out;
}

// Brute-force cross-correlation, the conv2d oracle.
inline Tensor conv2d_reference(const Tensor& x, const Tensor& k, int64_t p) {
    const int64_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
    const int64_t cout = k.extent(0), kk = k.extent(2);
    Tensor out({cout, h + 2 * p - kk + 1, w + 2 * p - kk + 1});
    for (int64_t co = 0; co < cout; ++co)
        for (int64_t y = 0; y < out.extent(1); ++y)
            for (int64_t xisp = 0; xisp < out.extent(2); ++xisp) {
                double acc = 0.0;
                for (int64_t ci = 0; ci < cin; ++ci)
                    for (int64_t a = 0; a < kk; ++a)
                        for (int64_t b = 0; b < kk; ++b) {
                            const int64_t yy = y + a - p, xx = xisp + b - p;
                            if (yy >= 0 && yy < h && xx >= 0 && xx < w)
                                acc += x.at(ci, yy, xx) * k.at(co, ci, a, b);
                        }
                out.at(co, y, xisp) = acc;
            }
    return out;
}

// Brute-force adjoint of conv2d_reference.
inline Tensor conv2d_transpose_reference(const Tensor& y, const Tensor& k, int64_t p) {
    const int64_t cout = y.extent(0), ho = y.extent(1), wo = y.extent(2);
    const int64_t cin = k.extent(1), kk = k.extent(2);
    Tensor out({cin, ho + kk - 1 - 2 * p, wo + kk - 1 - 2 * p});
    for (int64_t ci = 0; ci < cin; ++ci)
        for (int64_t m = 0; m < out.extent(1); ++m)
            for (int64_t n = 0; n < out.extent(2); ++n) {
                double acc = 0.0;
                for (int64_t co = 0; co < cout; ++co)
                    for (int64_t a = 0; a < kk; ++a)
                        for (int64_t b = 0; b < kk; ++b) {
                            const int64_t yy = m - a + p, xx = n - b + p;
                            if (yy >= 0 && yy < ho && xx >= 0 && xx < wo)
                                acc += y.at(co, yy, xx) * k.at(co, ci, a, b);
                        }
                out.at(ci, m, n) = acc;
            }
    return out;
}

}  // namespace test_helpers
