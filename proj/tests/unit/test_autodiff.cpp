#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <memory>

#include "dhgcn/autodiff/adam.hpp"
#include "dhgcn/autodiff/gradcheck.hpp"
#include "dhgcn/autodiff/tensor.hpp"
#include "dhgcn/sampling.hpp"

using namespace dhgcn;
using namespace dhgcn::ad;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    return Tensor(r, c, gaussian_vector(r * c, rng, scale));
}

// Checks d(sum(w * f(x)))/dx against central differences, with a random weighting w so that
// every output entry contributes.
void check_unary(const std::function<Tensor(const Tensor&)>& f, Tensor x, double tol, Rng& rng, double step = 1e-6) {
    Tensor probe(1, 1, {0.0});
    {
        NoGradGuard ng;
        probe = f(x);
    }
    Tensor w = random_tensor(probe.rows(), probe.cols(), rng);
    auto report = finite_diff_check([&] { return sum(mul(f(x), w)); }, {{"x", x}}, step, tol);
    EXPECT_TRUE(report.passed) << "max rel error " << report.max_rel_error;
}

void check_binary(const std::function<Tensor(const Tensor&, const Tensor&)>& f, Tensor a, Tensor b,
                  double tol, Rng& rng) {
    Tensor probe;
    {
        NoGradGuard ng;
        probe = f(a, b);
    }
    Tensor w = random_tensor(probe.rows(), probe.cols(), rng);
    auto report =
        finite_diff_check([&] { return sum(mul(f(a, b), w)); }, {{"a", a}, {"b", b}}, 1e-6, tol);
    EXPECT_TRUE(report.passed) << "max rel error " << report.max_rel_error;
}

}  // namespace

TEST(Tensor, ShapeValidation) {
    EXPECT_THROW(Tensor(2, 2, {1.0, 2.0, 3.0}), dimension_error);
    EXPECT_THROW(Tensor::zeros(2, 3).item(), dimension_error);
    EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
}

TEST(Primitives, ValueExamples) {
    Rng rng(1);
    Tensor x = random_tensor(3, 4, rng);
    auto same = add(x, Tensor::zeros(3, 4));
    EXPECT_EQ(std::vector<double>(same.data().begin(), same.data().end()),
              std::vector<double>(x.data().begin(), x.data().end()));
    Tensor eye = Tensor::from_matrix(Matrix::identity(3));
    auto prod = matmul(eye, x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(prod.data()[i], x.data()[i]);

    std::vector<double> vals;
    for (double v = -0.999; v <= 0.999; v += 0.0185) vals.push_back(v);
    Tensor y(1, vals.size(), vals);
    auto back = ad::tanh(ad::atanh(y));
    for (std::size_t i = 0; i < vals.size(); ++i) EXPECT_NEAR(back.data()[i], vals[i], 1e-12);
}

TEST(Primitives, BroadcastShapes) {
    Tensor a = Tensor::zeros(3, 4);
    EXPECT_EQ(add(a, Tensor::zeros(1, 4)).rows(), 3u);
    EXPECT_EQ(add(a, Tensor::zeros(3, 1)).cols(), 4u);
    EXPECT_EQ(add(Tensor::scalar(1.0), a).size(), 12u);
    EXPECT_THROW(add(a, Tensor::zeros(2, 4)), dimension_error);
    EXPECT_THROW(matmul(a, a), dimension_error);
}

TEST(Primitives, DomainFaultsNameTheOp) {
    try {
        ad::log(Tensor(1, 2, {1.0, -1.0}));
        FAIL() << "expected numeric_fault";
    } catch (const numeric_fault& e) {
        EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
    }
    EXPECT_THROW(ad::sqrt(Tensor(1, 1, {-1e-3})), numeric_fault);
    try {
        div(Tensor::scalar(1.0), Tensor::scalar(0.0));
        FAIL() << "expected numeric_fault";
    } catch (const numeric_fault& e) {
        EXPECT_NE(std::string(e.what()).find("div"), std::string::npos);
    }
    // clamped atanh stays finite at and beyond 1
    auto a = ad::atanh(Tensor(1, 2, {1.0, -2.0}));
    EXPECT_TRUE(std::isfinite(a.data()[0]));
    EXPECT_TRUE(std::isfinite(a.data()[1]));
}

TEST(Backward, SquareAtThree) {
    Tensor x = Tensor::scalar(3.0, true);
    Tape tape;
    TapeGuard g(tape);
    Tensor y = mul(x, x);
    tape.backward(y);
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, SquaredNormOfLinearMap) {
    Rng rng(2);
    Tensor w = random_tensor(3, 2, rng);
    w.set_requires_grad(true);
    Tensor h = random_tensor(2, 1, rng);
    Tape tape;
    {
        TapeGuard g(tape);
        tape.backward(sum(row_sqnorm(transpose(matmul(w, h)))));
    }
    // analytic: 2 (W h) h^T
    Matrix wh(3, 1);
    for (std::size_t i = 0; i < 3; ++i) wh(i, 0) = w(i, 0) * h(0, 0) + w(i, 1) * h(1, 0);
    auto grad = w.grad();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(grad[i * 2 + j], 2.0 * wh(i, 0) * h(j, 0), 1e-14);
}

TEST(Backward, RequiresScalarLoss) {
    Tensor x = Tensor::zeros(2, 2, true);
    Tape tape;
    TapeGuard g(tape);
    Tensor y = x + 1.0;
    EXPECT_THROW(tape.backward(y), dimension_error);
}

TEST(Backward, NoRecordsWithoutGradInputs) {
    Tape tape;
    TapeGuard g(tape);
    Rng rng(3);
    Tensor a = random_tensor(4, 4, rng);
    Tensor b = ad::tanh(matmul(a, a)) + 2.0;
    (void)sum(b);
    EXPECT_EQ(tape.size(), 0u);
    Tensor p = random_tensor(4, 4, rng);
    p.set_requires_grad(true);
    (void)sum(p * a);
    EXPECT_EQ(tape.size(), 2u);
}

TEST(Backward, NoRecordsWithoutActiveTape) {
    Tensor p = Tensor::zeros(2, 2, true);
    Tape tape;
    (void)sum(p + 1.0);
    EXPECT_EQ(tape.size(), 0u);
}

TEST(Gradients, LinearModelIsExact) {
    Rng rng(4);
    Tensor x = random_tensor(5, 3, rng);
    Tensor w = random_tensor(3, 2, rng);
    Tensor b = random_tensor(1, 2, rng);
    Tensor c = random_tensor(5, 2, rng);
    auto report = finite_diff_check([&] { return sum(mul(matmul(x, w) + b, c)); },
                                    {{"w", w}, {"b", b}}, 1e-5, 1e-9);
    EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Gradients, ElementwiseOps) {
    Rng rng(5);
    const double tol = 1e-6;
    check_unary([](const Tensor& t) { return ad::tanh(t); }, random_tensor(3, 4, rng), tol, rng);
    check_unary([](const Tensor& t) { return ad::exp(t); }, random_tensor(3, 4, rng, 0.5), tol, rng);
    check_unary([](const Tensor& t) { return ad::log(ad::exp(t) + 0.5); }, random_tensor(3, 4, rng), tol, rng);
    check_unary([](const Tensor& t) { return ad::sqrt(ad::exp(t)); }, random_tensor(3, 4, rng), tol, rng);
    check_unary([](const Tensor& t) { return ad::atanh(t * 0.3); }, random_tensor(3, 4, rng), tol, rng);
    check_unary([](const Tensor& t) { return ad::tanhc(t); }, random_tensor(3, 4, rng, 2.0), tol, rng);
    check_unary([](const Tensor& t) { return ad::atanhc(ad::tanh(t)); }, random_tensor(3, 4, rng), tol, rng);
    check_unary([](const Tensor& t) { return 1.0 / (t * t + 1.0); }, random_tensor(3, 4, rng), tol, rng);
    check_unary([](const Tensor& t) { return 2.0 - t * 3.0; }, random_tensor(3, 4, rng), tol, rng);
}

TEST(Gradients, SincLikeOpsMatchScalarDerivatives) {
    // scalar reference values frozen from tests/oracles/manifold_values.py
    EXPECT_NEAR(tanhc(0.3), 0.97104204150530301939, 1e-15);
    EXPECT_NEAR(tanhc_deriv(0.3), -0.18635026559557938752, 1e-15);
    EXPECT_NEAR(atanhc(0.3), 1.0317320140103723849, 1e-15);
    EXPECT_NEAR(atanhc_deriv(0.3), 0.22389694963575505395, 1e-15);
    for (double s : {1e-3 * (1.0 - 1e-9), 1e-3 * (1.0 + 1e-9)}) {
        EXPECT_NEAR(tanhc_deriv(s), -2.0 * s / 3.0, 1e-9);
        EXPECT_NEAR(atanhc_deriv(s), 2.0 * s / 3.0, 1e-9);
    }
    // the series branch is too flat for finite differences; compare the tape against the scalars
    Rng rng(11);
    Tensor x = random_tensor(3, 4, rng, 3e-4);
    x.set_requires_grad(true);
    for (bool inverse : {false, true}) {
        x.zero_grad();
        Tape tape;
        {
            TapeGuard g(tape);
            tape.backward(sum(inverse ? ad::atanhc(x) : ad::tanhc(x)));
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = x.data()[i];
            EXPECT_DOUBLE_EQ(x.grad()[i], inverse ? atanhc_deriv(s) : tanhc_deriv(s));
        }
    }
}

TEST(Gradients, PiecewiseOpsAwayFromKinks) {
    Rng rng(6);
    Tensor x(2, 3, {-1.0, -0.4, 0.3, 0.8, 1.7, -2.2});
    check_unary([](const Tensor& t) { return relu(t); }, x, 1e-9, rng);
    check_unary([](const Tensor& t) { return clamp(t, -0.5, 1.0); }, x, 1e-9, rng);
}

TEST(Gradients, BinaryOpsWithBroadcasting) {
    Rng rng(7);
    const double tol = 1e-6;
    auto A = [&] { return random_tensor(4, 3, rng); };
    check_binary([](const Tensor& a, const Tensor& b) { return a + b; }, A(), random_tensor(1, 3, rng), tol, rng);
    check_binary([](const Tensor& a, const Tensor& b) { return a - b; }, A(), random_tensor(4, 1, rng), tol, rng);
    check_binary([](const Tensor& a, const Tensor& b) { return a * b; }, A(), random_tensor(4, 3, rng), tol, rng);
    check_binary([](const Tensor& a, const Tensor& b) { return a * b; }, random_tensor(1, 1, rng), A(), tol, rng);
    check_binary([](const Tensor& a, const Tensor& b) { return a / (b * b + 1.0); }, A(), random_tensor(4, 1, rng), tol, rng);
}

TEST(Gradients, LinearAlgebraAndReductions) {
    Rng rng(8);
    const double tol = 1e-7;
    check_binary([](const Tensor& a, const Tensor& b) { return matmul(a, b); }, random_tensor(4, 3, rng),
                 random_tensor(3, 5, rng), tol, rng);
    check_binary([](const Tensor& a, const Tensor& b) { return matmul_t(a, b); }, random_tensor(4, 3, rng),
                 random_tensor(6, 3, rng), tol, rng);
    check_unary([](const Tensor& t) { return transpose(t); }, random_tensor(3, 5, rng), tol, rng);
    check_unary([](const Tensor& t) { return row_sum(t); }, random_tensor(3, 5, rng), tol, rng);
    check_unary([](const Tensor& t) { return col_sum(t); }, random_tensor(3, 5, rng), tol, rng);
    check_unary([](const Tensor& t) { return row_sqnorm(t); }, random_tensor(3, 5, rng), tol, rng);
    check_unary([](const Tensor& t) { return row_norm(t); }, random_tensor(3, 5, rng), tol, rng);
    check_unary([](const Tensor& t) { return mean(t) + sum(t); }, random_tensor(3, 5, rng), tol, rng);
}

TEST(Gradients, ShapeOps) {
    Rng rng(9);
    const double tol = 1e-7;
    check_binary([](const Tensor& a, const Tensor& b) { return concat_rows({a, b, a}); },
                 random_tensor(2, 3, rng), random_tensor(4, 3, rng), tol, rng);
    check_unary([](const Tensor& t) { return slice_rows(t, 1, 3); }, random_tensor(5, 2, rng), tol, rng);
    check_unary([](const Tensor& t) { return gather_rows(t, {4, 0, 0, 2}); }, random_tensor(5, 2, rng), tol, rng);
    check_unary([](const Tensor& t) { return pick(t, {2, 0, 1}); }, random_tensor(3, 3, rng), tol, rng);
    check_unary([](const Tensor& t) { return broadcast_to(t, 4, 3); }, random_tensor(1, 3, rng), tol, rng);
}

TEST(Gradients, SparseDenseProduct) {
    Rng rng(10);
    auto s = std::make_shared<const CsrMatrix>(CsrMatrix::from_triplets(
        3, 4, {{0, 1, 0.5}, {0, 3, -1.0}, {2, 0, 2.0}, {2, 2, 0.25}, {1, 1, 1.5}}));
    check_unary([s](const Tensor& t) { return spmm(s, t); }, random_tensor(4, 2, rng), 1e-7, rng);
    Tensor b = random_tensor(4, 2, rng);
    auto dense = matmul(Tensor::from_matrix(s->to_dense()), b);
    auto sparse = spmm(s, b);
    for (std::size_t i = 0; i < dense.size(); ++i) EXPECT_NEAR(dense.data()[i], sparse.data()[i], 1e-15);
}

TEST(Gradients, ClipIsStraightThrough) {
    Tensor x(2, 2, {3.0, 4.0, 0.1, 0.2}, true);
    Tape tape;
    TapeGuard g(tape);
    Tensor y = clip_ball(x, -1.0);
    EXPECT_NEAR(safe_norm(y.row(0)), 1.0 - 1e-5, 1e-15);
    tape.backward(sum(y));
    for (double v : x.grad()) EXPECT_EQ(v, 1.0);
}

TEST(Gradients, ClampedAtanhHasZeroGradientOutside) {
    Tensor x(1, 2, {1.5, 0.5}, true);
    Tape tape;
    TapeGuard g(tape);
    tape.backward(sum(ad::atanh(x)));
    EXPECT_EQ(x.grad()[0], 0.0);
    EXPECT_NEAR(x.grad()[1], 1.0 / 0.75, 1e-15);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    Tensor w(1, 3, {0.5, -1.0, 2.0}, true);
    Adam opt({{"w", w, false}}, AdamConfig{});
    opt.step({{0.0, 0.0, 0.0}});
    EXPECT_EQ(w.data()[0], 0.5);
    EXPECT_EQ(w.data()[1], -1.0);
    EXPECT_EQ(w.data()[2], 2.0);
}

TEST(Adam, FirstStepDescends) {
    Tensor w = Tensor::scalar(1.0, true);
    Adam opt({{"w", w, false}}, AdamConfig{.lr = 0.1});
    Tape tape;
    {
        TapeGuard g(tape);
        tape.backward(w * w);
    }
    opt.step();
    EXPECT_LT(w.item(), 1.0);
    // bias-corrected first step moves by lr
    EXPECT_NEAR(w.item(), 0.9, 1e-7);
}

TEST(Adam, QuadraticBowlConverges) {
    Tensor w(1, 3, {2.0, -3.0, 0.5}, true);
    const std::vector<double> target{0.25, 1.0, -0.75};
    Tensor t(1, 3, target);
    Adam opt({{"w", w, false}}, AdamConfig{.lr = 1e-2});
    int steps = 0;
    for (; steps < 5000; ++steps) {
        Tape tape;
        {
            TapeGuard g(tape);
            tape.backward(sum(row_sqnorm(w - t)));
        }
        opt.step();
        opt.zero_grad();
        if (la::max_abs_diff(w.data(), target) < 1e-6) break;
    }
    EXPECT_LT(steps, 5000);
    EXPECT_LT(la::max_abs_diff(w.data(), target), 1e-6);
}

TEST(Adam, WeightDecayOnlyOnFlaggedParams) {
    Tensor w = Tensor::scalar(1.0, true);
    Tensor b = Tensor::scalar(1.0, true);
    Adam opt({{"w", w, true}, {"b", b, false}}, AdamConfig{.lr = 0.1, .weight_decay = 0.5});
    opt.step({{0.0}, {0.0}});
    EXPECT_NEAR(w.item(), 1.0 - 0.1 * 0.5, 1e-15);
    EXPECT_EQ(b.item(), 1.0);
}

TEST(Determinism, SameSeedSameTrajectory) {
    auto run = [] {
        Rng rng(42);
        Tensor w = random_tensor(3, 3, rng);
        w.set_requires_grad(true);
        Tensor x = random_tensor(8, 3, rng);
        Adam opt({{"w", w, true}}, AdamConfig{.weight_decay = 1e-3});
        for (int i = 0; i < 50; ++i) {
            Tape tape;
            {
                TapeGuard g(tape);
                tape.backward(mean(ad::tanh(matmul(x, w))));
            }
            opt.step();
            opt.zero_grad();
        }
        return std::vector<double>(w.data().begin(), w.data().end());
    };
    EXPECT_EQ(run(), run());
}
