#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "findnet/tensor.hpp"

namespace findnet {

// Deterministic random stream. Distributions are hand-rolled on top of
// mt19937_64 so that identical seeds give identical sequences on every
// platform (std::normal_distribution et al. are implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
        return lo + static_cast<int64_t>(gen_() % static_cast<uint64_t>(hi - lo + 1));
    }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    Tensor normal_tensor(Shape shape, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = stddev * normal();
        return t;
    }

    Tensor uniform_tensor(Shape shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
        return t;
    }

    // Fisher-Yates; deterministic for a given stream state.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            int64_t j = uniform_int(0, i);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    // Derive an independent child stream, e.g. one per sample.
    Rng child(uint64_t salt) {
        uint64_t s = next_u64();
        return Rng(s ^ (salt * 0x9e3779b97f4a7c15ULL));
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace findnet
