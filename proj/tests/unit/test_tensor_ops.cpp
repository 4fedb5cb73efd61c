#include <cmath>
#include <limits>

#include "../support/gradcheck.hpp"
#include "doctest.h"
#include "focusnas/error.hpp"
#include "focusnas/ops.hpp"

using namespace focusnas;
using focusnas::testing::gradcheck;
using focusnas::testing::random_tensor;
using focusnas::testing::weighted_sum;

namespace {

Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Errc error_code(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::io;
}

}  // namespace

TEST_CASE("tensor shape validation") {
    CHECK(error_code([] { Tensor t({2, 0}); }) == Errc::shape_mismatch);
    CHECK(error_code([] { Tensor t({2, 2}, std::vector<double>(3)); }) == Errc::shape_mismatch);
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.reshaped({3, 2}).dim(0) == 3);
}

TEST_CASE("matmul") {
    Rng rng(1);
    Tape tape(false);
    Tensor x = random_tensor({3, 4}, rng);
    CHECK(ops::matmul(tape.constant(identity(3)), tape.constant(x)).value() == x);
    Tensor z = ops::matmul(tape.constant(Tensor({2, 3})), tape.constant(x)).value();
    for (double v : z.data()) CHECK(v == 0.0);
    CHECK(error_code([&] { ops::matmul(tape.constant(x), tape.constant(x)); }) == Errc::shape_mismatch);

    for (auto [m, k, n] : {std::tuple{4, 5, 3}, {1, 3, 2}, {3, 1, 4}}) {
        auto fn = [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::matmul(v[0], v[1])); };
        const std::size_t mm = m, kk = k, nn = n;
        CHECK(gradcheck(fn, {random_tensor({mm, kk}, rng), random_tensor({kk, nn}, rng)}) < 1e-6);
    }
}

TEST_CASE("layer_norm") {
    Rng rng(2);
    Tape tape(false);
    Var ones = tape.constant(Tensor({4}, 1.0));
    Var zeros = tape.constant(Tensor({4}, 0.0));
    Tensor flat = ops::layer_norm(tape.constant(Tensor({2, 4}, 3.25)), ones, zeros).value();
    for (double v : flat.data()) CHECK(v == 0.0);

    Tensor beta = random_tensor({4}, rng);
    Tensor out = ops::layer_norm(tape.constant(random_tensor({3, 4}, rng)), zeros, tape.constant(beta)).value();
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) CHECK(out.at(r, c) == beta[c]);

    Tensor y = ops::layer_norm(tape.constant(random_tensor({3, 8}, rng, -3, 3)), tape.constant(Tensor({8}, 1.0)),
                               tape.constant(Tensor({8}, 0.0)))
                   .value();
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0, var = 0;
        for (std::size_t c = 0; c < 8; ++c) mean += y.at(r, c) / 8;
        for (std::size_t c = 0; c < 8; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean) / 8;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }

    auto fn = [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::layer_norm(v[0], v[1], v[2])); };
    for (std::size_t e : {8, 5, 1}) {
        for (std::size_t n : {3, 1}) {
            CHECK(gradcheck(fn, {random_tensor({n, e}, rng), random_tensor({e}, rng), random_tensor({e}, rng)}) <
                  1e-6);
        }
    }
}

TEST_CASE("softmax_rows") {
    Rng rng(3);
    Tape tape(false);
    Tensor half = ops::softmax_rows(tape.constant(Tensor({1, 2}, 0.0))).value();
    CHECK(half[0] == 0.5);
    CHECK(half[1] == 0.5);

    Tensor x = random_tensor({3, 6}, rng, -5, 5);
    Tensor shifted = x;
    for (double& v : shifted.data()) v += 17.0;
    Tensor a = ops::softmax_rows(tape.constant(x)).value();
    Tensor b = ops::softmax_rows(tape.constant(shifted)).value();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 6; ++c) s += a.at(r, c);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    Tensor big({1, 3}, std::vector<double>{1000.0, 999.0, -1000.0});
    CHECK(ops::softmax_rows(tape.constant(big)).value().all_finite());

    auto fn = [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::softmax_rows(v[0])); };
    auto lfn = [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::log_softmax_rows(v[0])); };
    for (Shape s : {Shape{2, 5}, Shape{1, 3}, Shape{4, 2}}) {
        CHECK(gradcheck(fn, {random_tensor(s, rng, -2, 2)}) < 1e-6);
        CHECK(gradcheck(lfn, {random_tensor(s, rng, -2, 2)}) < 1e-6);
    }
}

TEST_CASE("gelu and pointwise nonlinearities") {
    Rng rng(4);
    Tape tape(false);
    Tensor x({3}, std::vector<double>{0.0, 12.0, -12.0});
    Tensor y = ops::gelu(tape.constant(x)).value();
    CHECK(y[0] == 0.0);
    CHECK(y[1] == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(std::abs(y[2]) < 1e-12);

    for (auto op : {ops::gelu, ops::sigmoid, ops::tanh}) {
        auto fn = [op](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, op(v[0])); };
        for (Shape s : {Shape{7}, Shape{2, 3}, Shape{1}}) CHECK(gradcheck(fn, {random_tensor(s, rng, -3, 3)}) < 1e-6);
    }
}

TEST_CASE("depthwise_conv3x3") {
    Rng rng(5);
    Tape tape(false);
    Tensor grid = random_tensor({4, 3, 2}, rng);
    Tensor center({3, 3, 2});
    center[4 * 2 + 0] = 1.0;
    center[4 * 2 + 1] = 1.0;
    Tensor same = ops::depthwise_conv3x3(tape.constant(grid), tape.constant(center), tape.constant(Tensor({2}))).value();
    CHECK(same == grid);

    Tensor bias({2}, std::vector<double>{0.25, -1.5});
    Tensor flat = ops::depthwise_conv3x3(tape.constant(grid), tape.constant(Tensor({3, 3, 2})), tape.constant(bias))
                      .value();
    for (std::size_t i = 0; i < flat.size(); ++i) CHECK(flat[i] == bias[i % 2]);

    auto fn = [](Tape& t, const std::vector<Var>& v) {
        return weighted_sum(t, ops::depthwise_conv3x3(v[0], v[1], v[2]));
    };
    for (Shape s : {Shape{4, 4, 2}, Shape{2, 3, 3, 1}, Shape{1, 1, 3}}) {
        const std::size_t c = s.back();
        CHECK(gradcheck(fn, {random_tensor(s, rng), random_tensor({3, 3, c}, rng), random_tensor({c}, rng)}) < 1e-6);
    }
}

TEST_CASE("cross_entropy") {
    Rng rng(6);
    Tape tape(false);
    std::vector<int> labels{3, 0};
    Tensor uniform({2, 10}, 0.0);
    CHECK(ops::cross_entropy(tape.constant(uniform), labels).value()[0] == doctest::Approx(std::log(10.0)));

    Tensor sure({2, 10}, 0.0);
    sure.at(0, 3) = 60.0;
    sure.at(1, 0) = 60.0;
    CHECK(ops::cross_entropy(tape.constant(sure), labels).value()[0] < 1e-20);

    std::vector<int> bad{3, 10};
    CHECK(error_code([&] { ops::cross_entropy(tape.constant(uniform), bad); }) == Errc::out_of_range);
    std::vector<int> neg{-1, 0};
    CHECK(error_code([&] { ops::cross_entropy(tape.constant(uniform), neg); }) == Errc::out_of_range);

    for (std::size_t b : {4, 1, 3}) {
        std::vector<int> lab;
        for (std::size_t i = 0; i < b; ++i) lab.push_back(static_cast<int>(rng.index(10)));
        auto fn = [&lab](Tape&, const std::vector<Var>& v) { return ops::cross_entropy(v[0], lab); };
        CHECK(gradcheck(fn, {random_tensor({b, 10}, rng, -2, 2)}) < 1e-6);
    }
}

TEST_CASE("attention") {
    Rng rng(7);
    auto make = [](std::size_t batch, std::size_t heads, std::size_t hd) {
        return [=](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::attention(v[0], batch, heads, hd)); };
    };
    CHECK(gradcheck(make(2, 2, 3), {random_tensor({8, 18}, rng)}) < 1e-6);
    CHECK(gradcheck(make(1, 1, 2), {random_tensor({5, 6}, rng)}) < 1e-6);
    CHECK(gradcheck(make(3, 3, 1), {random_tensor({6, 9}, rng)}) < 1e-6);

    // Equal keys make every query attend uniformly, so each output row is the
    // mean of the value rows.
    Tensor qkv({3, 3});
    for (std::size_t r = 0; r < 3; ++r) {
        qkv.at(r, 0) = rng.uniform();
        qkv.at(r, 1) = 0.5;
        qkv.at(r, 2) = static_cast<double>(r);
    }
    Tape tape(false);
    Tensor out = ops::attention(tape.constant(qkv), 1, 1, 1).value();
    for (std::size_t r = 0; r < 3; ++r) CHECK(out[r] == doctest::Approx(1.0));
}

TEST_CASE("structural ops") {
    Rng rng(8);
    auto check = [&](auto fn, std::vector<Tensor> in) { CHECK(gradcheck(fn, std::move(in)) < 1e-6); };
    check([](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::add_bias(v[0], v[1])); },
          {random_tensor({3, 4}, rng), random_tensor({4}, rng)});
    check([](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::mul(v[0], v[1])); },
          {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
    check([](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::mean_pool(v[0], 2)); },
          {random_tensor({6, 3}, rng)});
    check([](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::slice_cols(v[0], 1, 3)); },
          {random_tensor({2, 4}, rng)});
    check([](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::row(v[0], 1)); },
          {random_tensor({3, 2}, rng)});
    check([](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ops::reshape(ops::scale(v[0], 2.5), {6})); },
          {random_tensor({2, 3}, rng)});
    check([](Tape&, const std::vector<Var>& v) { return ops::pick(ops::add(v[0], v[0]), 4); },
          {random_tensor({2, 3}, rng)});
}

TEST_CASE("backward contract") {
    Tape tape;
    Var x = tape.variable(Tensor({1}, 3.0));
    Var unused = tape.variable(Tensor({2}, 1.0));
    Var y = ops::sum(ops::mul(x, x));
    tape.backward(y);
    CHECK(tape.grad(x)[0] == 6.0);
    Tensor gu = tape.grad(unused);
    CHECK(gu.size() == 2);
    CHECK(gu[0] == 0.0);
    CHECK(gu[1] == 0.0);
    CHECK(error_code([&] { tape.backward(y); }) == Errc::tape_state);

    Tape t2;
    Var v = t2.variable(Tensor({2}, 1.0));
    CHECK(error_code([&] { t2.backward(v); }) == Errc::shape_mismatch);
}

TEST_CASE("parameter slices accumulate into the full tensor") {
    Parameter p("w", Tensor({3, 4}, 1.0));
    Parameter unused("u", Tensor({2}, 1.0));
    Tape tape;
    Var w = tape.parameter(p, {2, 3});
    CHECK(w.shape() == Shape{2, 3});
    tape.backward(ops::sum(ops::scale(w, 2.0)));
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) CHECK(p.grad.at(r, c) == ((r < 2 && c < 3) ? 2.0 : 0.0));
    CHECK(p.touched == Shape{2, 3});
    for (double g : unused.grad.data()) CHECK(g == 0.0);
    CHECK(unused.touched.empty());
}

TEST_CASE("non-finite values are rejected") {
    Tape tape(false);
    Tensor x({2}, std::vector<double>{1.0, std::numeric_limits<double>::infinity()});
    CHECK(error_code([&] { ops::scale(tape.constant(x), 1.0); }) == Errc::non_finite);
}

TEST_CASE("forward results are bit-reproducible") {
    auto run = [] {
        Rng rng(11);
        Tape tape(false);
        Tensor a = random_tensor({16, 9}, rng), b = random_tensor({9, 7}, rng);
        return ops::softmax_rows(ops::matmul(tape.constant(a), tape.constant(b))).value();
    };
    CHECK(run() == run());
}
