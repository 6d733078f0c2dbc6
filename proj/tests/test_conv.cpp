#include <catch2/catch_amalgamated.hpp>

#include "findnet/ops.hpp"
#include "findnet/rng.hpp"
#include "helpers.hpp"

using namespace findnet;

namespace {
Tensor run_conv(const Tensor& x, const Tensor& k, int64_t p) {
    Tape t;
    return t.value(conv2d(t, t.constant(x), t.constant(k), p));
}
Tensor run_convT(const Tensor& x, const Tensor& k, int64_t p) {
    Tape t;
    return t.value(conv2d_transpose(t, t.constant(x), t.constant(k), p));
}
}  // namespace

TEST_CASE("conv2d with a 1x1 identity kernel is the identity", "[conv]") {
    Rng rng(201);
    Tensor x = rng.normal_tensor({1, 5, 5});
    Tensor k({1, 1, 1, 1});
    k[0] = 1.0;
    CHECK(bit_equal(run_conv(x, k, 0), x));
}

TEST_CASE("conv2d all-ones window sums", "[conv]") {
    Tensor x = Tensor::ones({1, 3, 3});
    Tensor k = Tensor::ones({1, 1, 3, 3});
    Tensor out = run_conv(x, k, 1);
    CHECK(out.at(0, 1, 1) == 9.0);
    CHECK(out.at(0, 0, 0) == 4.0);
    CHECK(out.at(0, 0, 2) == 4.0);
    CHECK(out.at(0, 2, 0) == 4.0);
    CHECK(out.at(0, 0, 1) == 6.0);
}

TEST_CASE("conv2d output shape arithmetic", "[conv]") {
    Tensor x({2, 8, 8});
    Tensor k({4, 2, 3, 3});
    CHECK(run_conv(x, k, 1).shape() == Shape{4, 8, 8});
    CHECK(run_conv(x, k, 0).shape() == Shape{4, 6, 6});
}

TEST_CASE("conv2d matches the brute-force sliding-window oracle", "[conv]") {
    Rng rng(202);
    for (int64_t p : {0, 1, 2}) {
        Tensor x = rng.normal_tensor({3, 7, 6});
        Tensor k = rng.normal_tensor({2, 3, 3, 3});
        CHECK(max_abs_diff(run_conv(x, k, p), test_helpers::conv2d_reference(x, k, p)) < 1e-12);
    }
}

TEST_CASE("conv2d_transpose matches the brute-force adjoint oracle", "[conv]") {
    Rng rng(203);
    Tensor y = rng.normal_tensor({2, 6, 6});
    Tensor k = rng.normal_tensor({2, 3, 5, 5});
    for (int64_t p : {0, 1, 2})
        CHECK(max_abs_diff(run_convT(y, k, p), test_helpers::conv2d_transpose_reference(y, k, p)) < 1e-12);
}

TEST_CASE("conv2d_transpose basic contracts", "[conv]") {
    Rng rng(204);
    // 1x1 kernel of value c scales the input
    Tensor y = rng.normal_tensor({1, 4, 4});
    Tensor k({1, 1, 1, 1});
    k[0] = -2.5;
    Tensor out = run_convT(y, k, 0);
    CHECK(max_abs_diff(out, -2.5 * y) == 0.0);

    // zero input -> zero output
    Tensor z = run_convT(Tensor({3, 6, 6}), rng.normal_tensor({3, 2, 3, 3}), 1);
    CHECK(max_abs(z) == 0.0);
}

TEST_CASE("conv adjoint identity on 100 random instances", "[conv]") {
    Rng rng(205);
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t cin = rng.uniform_int(1, 3), cout = rng.uniform_int(1, 3);
        const int64_t k = 2 * rng.uniform_int(0, 2) + 1;  // 1, 3, 5
        const int64_t h = rng.uniform_int(k, k + 6), w = rng.uniform_int(k, k + 6);
        const int64_t p = rng.uniform_int(0, k / 2 + 1);
        Tensor x = rng.normal_tensor({cin, h, w});
        Tensor kk = rng.normal_tensor({cout, cin, k, k});
        const int64_t ho = h + 2 * p - k + 1, wo = w + 2 * p - k + 1;
        if (ho < 1 || wo < 1) continue;
        Tensor y = rng.normal_tensor({cout, ho, wo});
        const double lhs = dot(run_conv(x, kk, p), y);
        const double rhs = dot(x, run_convT(y, kk, p));
        CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::max(1.0, std::fabs(lhs)));
    }
}

TEST_CASE("conv2d dimension errors", "[conv]") {
    Tape t;
    NodeId x = t.constant(Tensor({2, 5, 5}));
    NodeId k_badc = t.constant(Tensor({1, 3, 3, 3}));
    CHECK_THROWS_AS(conv2d(t, x, k_badc, 1), DimError);
    NodeId k_even = t.constant(Tensor({1, 2, 2, 2}));
    CHECK_THROWS_AS(conv2d(t, x, k_even, 0), DimError);
    NodeId k_ok = t.constant(Tensor({1, 2, 3, 3}));
    CHECK_THROWS_AS(conv2d_transpose(t, x, k_ok, 0), DimError);  // Cout mismatch (2 vs 1)
}

TEST_CASE("conv2d forward is bit-deterministic", "[conv]") {
    Rng rng(206);
    Tensor x = rng.normal_tensor({2, 9, 9});
    Tensor k = rng.normal_tensor({3, 2, 3, 3});
    CHECK(bit_equal(run_conv(x, k, 1), run_conv(x, k, 1)));
}

// --- batch normalization value semantics ------------------------------------

TEST_CASE("batch_norm train mode normalizes per channel", "[conv]") {
    Rng rng(207);
    BatchNormState bn("bn", 3);
    Tensor x = rng.normal_tensor({3, 6, 6});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = 2.0 * x[i] + 1.5;
    Tape t;
    Tensor y = t.value(batch_norm(t, t.constant(x), bn, Mode::train));
    for (int64_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int64_t i = 0; i < 36; ++i) mean += y[c * 36 + i];
        mean /= 36.0;
        for (int64_t i = 0; i < 36; ++i) var += (y[c * 36 + i] - mean) * (y[c * 36 + i] - mean);
        var /= 36.0;
        CHECK(std::fabs(mean) < 1e-8);
        CHECK(var == Catch::Approx(1.0).margin(1e-4));  // eps floor shifts variance slightly
    }
    // running statistics moved toward the batch statistics
    CHECK(bn.running_mean[0] != 0.0);
    CHECK(bn.running_var[0] != 1.0);
}

TEST_CASE("batch_norm infer mode with identity statistics passes through", "[conv]") {
    Rng rng(208);
    BatchNormState bn("bn", 2);
    bn.set_identity_infer();
    Tensor x = rng.normal_tensor({2, 4, 4});
    Tape t;
    Tensor y = t.value(batch_norm(t, t.constant(x), bn, Mode::infer));
    CHECK(bit_equal(y, x));
}

TEST_CASE("batch_norm maps a constant channel to the shift value", "[conv]") {
    BatchNormState bn("bn", 1);
    bn.beta.value[0] = 0.75;
    bn.gamma.value[0] = 3.0;
    Tensor x = Tensor::full({1, 4, 4}, 42.0);
    Tape t;
    Tensor y = t.value(batch_norm(t, t.constant(x), bn, Mode::train));
    // variance floor keeps this finite; (x - mean) == 0 so output == shift
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.75);
}

TEST_CASE("batch_norm channel mismatch raises", "[conv]") {
    BatchNormState bn("bn", 2);
    Tape t;
    CHECK_THROWS_AS(batch_norm(t, t.constant(Tensor({3, 4, 4})), bn, Mode::train), DimError);
}
