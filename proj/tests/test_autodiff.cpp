#include <catch2/catch_amalgamated.hpp>

#include "findnet/gradcheck.hpp"
#include "findnet/opchecks.hpp"

using namespace findnet;

TEST_CASE("backward of sum is all-ones", "[autodiff]") {
    Rng rng(301);
    Tensor x = rng.normal_tensor({2, 3, 3});
    Tape t;
    NodeId xid = t.constant(x);
    t.backward(sum_all(t, xid));
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(t.grad(xid)[i] == 1.0);
}

TEST_CASE("backward of sum(relu(x)) is the positivity indicator", "[autodiff]") {
    Tensor x({1, 2, 3}, {1.5, -0.5, 0.0, 2.0, -3.0, 0.25});
    Tape t;
    NodeId xid = t.constant(x);
    t.backward(sum_all(t, relu(t, xid)));
    const double want[] = {1, 0, 0, 1, 0, 1};  // subgradient at 0 is 0
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(t.grad(xid)[i] == want[i]);
}

TEST_CASE("backward requires a scalar loss", "[autodiff]") {
    Tape t;
    NodeId x = t.constant(Tensor({2, 2}));
    CHECK_THROWS_AS(t.backward(x), ContractError);
}

TEST_CASE("unreachable nodes keep zero grads", "[autodiff]") {
    Rng rng(302);
    Tape t;
    NodeId a = t.constant(rng.normal_tensor({2, 2}));
    NodeId b = t.constant(rng.normal_tensor({2, 2}));
    NodeId unused = square(t, b);
    NodeId loss = sum_all(t, square(t, a));
    t.backward(loss);
    CHECK(max_abs(t.grad(b)) == 0.0);
    CHECK(max_abs(t.grad(unused)) == 0.0);
    CHECK(max_abs(t.grad(a)) > 0.0);
}

TEST_CASE("grad_check on a quadratic is nearly exact", "[autodiff]") {
    Rng rng(303);
    Tensor x = rng.normal_tensor({3, 4});
    double err = grad_check([](Tape& t, NodeId v) { return sum_all(t, square(t, v)); }, x);
    CHECK(err < 1e-7);
}

TEST_CASE("every registered operator passes grad_check", "[autodiff]") {
    for (auto& check : opchecks::all_checks()) {
        INFO(check.name);
        CHECK(check.run() < check.threshold);
    }
}

TEST_CASE("grad_check detects a corrupted adjoint", "[autodiff]") {
    Rng rng(304);
    Tensor x = rng.normal_tensor({2, 6, 6});
    Tensor k = rng.normal_tensor({2, 2, 3, 3});
    auto f = [&](Tape& t, NodeId v) { return sum_all(t, square(t, conv2d(t, v, t.constant(k), 1))); };
    Tape::break_op() = "conv2d";
    const double err = grad_check(f, x);
    Tape::break_op().clear();
    CHECK(err > 1e-2);
    CHECK(grad_check(f, x) < 1e-6);  // clean again once the hook is off
}

TEST_CASE("composed graphs pass grad_check on repeated random inputs", "[autodiff]") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed * 17);
        Tensor x = opchecks::detail::away_from_zero(rng, {2, 6, 6});
        Tensor k = rng.normal_tensor({3, 2, 3, 3});
        auto f = [&](Tape& t, NodeId v) {
            NodeId h = conv2d(t, v, t.constant(k), 1);
            h = relu(t, h);
            h = conv2d_transpose(t, h, t.constant(k), 1);
            NodeId l2 = sum_all(t, square(t, h));
            NodeId l1 = sum_all(t, abs_val(t, h));
            return add(t, l2, scale(t, l1, 0.3));
        };
        INFO("seed " << seed);
        CHECK(grad_check(f, x, 1e-5, 36, seed) < 1e-4);
    }
}

TEST_CASE("tape forward passes are deterministic", "[autodiff]") {
    Rng rng(305);
    Tensor x = rng.normal_tensor({2, 8, 8});
    Tensor k = rng.normal_tensor({2, 2, 3, 3});
    auto run = [&] {
        Tape t;
        NodeId h = conv2d(t, t.constant(x), t.constant(k), 1);
        h = rfft2_stack(t, h);
        h = relu(t, h);
        h = irfft2_unstack(t, h, 8);
        return t.value(h);
    };
    CHECK(bit_equal(run(), run()));
}
