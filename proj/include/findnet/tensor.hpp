#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace findnet {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// map failures onto its exit-code contract.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimError : Error {          // shape / channel-count mismatch
    using Error::Error;
};
struct SizeError : Error {         // unsupported extents (non power-of-two, odd, ...)
    using Error::Error;
};
struct ContractError : Error {     // API misuse (non-scalar loss, bad mode, ...)
    using Error::Error;
};
struct ConfigError : Error {       // invalid configuration / channel split
    using Error::Error;
};
struct DataError : Error {         // file format / dataset problems
    using Error::Error;
};
struct GenError : Error {          // sample generation failure (placement, LI)
    using Error::Error;
};
struct EvalError : Error {         // metric evaluation failure (empty mask, ...)
    using Error::Error;
};

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    return out + "]";
}

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

// Dense n-dimensional array of doubles, row-major. The single value currency
// of all numerics in this library. Conventional layouts are [C,H,W] for
// feature maps and [Cout,Cin,k,k] for convolution kernels.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        for (int64_t e : shape_)
            if (e <= 0) throw DimError("tensor extents must be positive, got " + shape_str(shape_));
        data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
            throw DimError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t extent(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // [H,W]
    double& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    double at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    // [C,H,W]
    double& at(int64_t c, int64_t i, int64_t j) {
        return data_[static_cast<size_t>((c * shape_[1] + i) * shape_[2] + j)];
    }
    double at(int64_t c, int64_t i, int64_t j) const {
        return data_[static_cast<size_t>((c * shape_[1] + i) * shape_[2] + j)];
    }
    // [N,C,k,k]
    double& at(int64_t n, int64_t c, int64_t i, int64_t j) {
        return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + i) * shape_[3] + j)];
    }
    double at(int64_t n, int64_t c, int64_t i, int64_t j) const {
        return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + i) * shape_[3] + j)];
    }

    // Same data, new shape metadata. numel must match.
    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw DimError("reshape " + shape_str(shape_) + " -> " + shape_str(s) + " changes element count");
        Tensor t;
        t.shape_ = std::move(s);
        t.data_ = data_;
        return t;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!same_shape(a, b))
        throw DimError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

// Value-level elementwise helpers (no differentiation); the tape has its own ops.
inline Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}
inline Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}
inline Tensor operator*(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}
inline Tensor operator*(double s, const Tensor& a) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = s * a[i];
    return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double sum(const Tensor& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a[i];
    return acc;
}

inline double max_abs(const Tensor& a) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i]));
    return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i] || std::signbit(a[i]) != std::signbit(b[i])) return false;
    return true;
}

// Frequency-grid container for the half spectrum of a real 2-D transform:
// extents [..., H, W/2+1], split into real and imaginary parts.
struct ComplexTensor {
    Tensor re;
    Tensor im;

    ComplexTensor() = default;
    explicit ComplexTensor(Shape shape) : re(shape), im(std::move(shape)) {}

    const Shape& shape() const { return re.shape(); }
};

inline bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

inline void require_pow2_hw(int64_t h, int64_t w, const char* what) {
    if (!is_pow2(h) || !is_pow2(w))
        throw SizeError(std::string(what) + ": spatial extents must be powers of two, got " +
                        std::to_string(h) + "x" + std::to_string(w));
}

}  // namespace findnet
