#include <gtest/gtest.h>

#include <cmath>

#include "dhgcn/manifold.hpp"
#include "dhgcn/sampling.hpp"

using namespace dhgcn;

namespace {

const Curvature kUnit{-1.0};

PoincarePoint P(Vector v, Curvature k = kUnit) { return PoincarePoint(std::move(v), k); }

void expect_near_vec(const Vector& a, const Vector& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "component " << i;
}

// gyr[a,b]w = (-(a+b)) + (a + (b + w)), valid while w is itself a ball point
Vector gyration_by_identity(const Vector& a, const Vector& b, const Vector& w, double kappa) {
    Vector ab = raw::mobius_add(a, b, kappa);
    Vector inner = raw::mobius_add(a, raw::mobius_add(b, w, kappa), kappa);
    return raw::mobius_add(raw::negate(ab), inner, kappa);
}

}  // namespace

TEST(Curvature, RejectsNonNegativeOrNonFinite) {
    EXPECT_THROW(Curvature(0.0), std::invalid_argument);
    EXPECT_THROW(Curvature(0.5), std::invalid_argument);
    EXPECT_THROW(Curvature(std::nan("")), std::invalid_argument);
    Curvature k(-4.0);
    EXPECT_DOUBLE_EQ(k.radius(), 0.5);
}

TEST(PoincarePoint, ValidatesMembership) {
    EXPECT_THROW(P({1.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(P({0.1, std::numeric_limits<double>::infinity()}), numeric_fault);
    EXPECT_NO_THROW(P({0.6, 0.7}));
}

TEST(MobiusAdd, IdentityAndInverse) {
    auto x = P({0.2, -0.5, 0.1});
    auto zero = PoincarePoint::origin(3, kUnit);
    expect_near_vec(mobius_add(x, zero).coords(), x.coords(), 1e-15);
    expect_near_vec(mobius_add(zero, x).coords(), x.coords(), 1e-15);
    expect_near_vec(mobius_add(x, mobius_neg(x)).coords(), Vector(3, 0.0), 1e-15);
    expect_near_vec(mobius_add(mobius_neg(x), x).coords(), Vector(3, 0.0), 1e-15);
}

TEST(MobiusAdd, CollinearExample) {
    auto r = mobius_add(P({0.3, 0.0}), P({0.4, 0.0}));
    EXPECT_NEAR(r.coords()[0], 0.625, 1e-15);
    EXPECT_EQ(r.coords()[1], 0.0);
}

TEST(MobiusAdd, Errors) {
    EXPECT_THROW(mobius_add(P({0.1}), P({0.1, 0.2})), dimension_error);
    EXPECT_THROW(mobius_add(P({0.1}), P({0.1}, Curvature(-2.0))), curvature_mismatch);
}

TEST(MobiusSub, Examples) {
    auto x = P({0.3, -0.2});
    expect_near_vec(mobius_sub(x, x).coords(), {0.0, 0.0}, 1e-15);
    expect_near_vec(mobius_sub(x, PoincarePoint::origin(2, kUnit)).coords(), x.coords(), 1e-15);
    expect_near_vec(mobius_sub(P({0.625, 0.0}), P({0.4, 0.0})).coords(), {0.3, 0.0}, 1e-15);
}

TEST(ConformalFactor, Examples) {
    EXPECT_DOUBLE_EQ(conformal_factor(PoincarePoint::origin(4, kUnit)), 2.0);
    EXPECT_NEAR(conformal_factor(P({0.5, 0.0})), 8.0 / 3.0, 1e-15);
    EXPECT_NEAR(conformal_factor(P({0.0, 0.25}, Curvature(-4.0))), 8.0 / 3.0, 1e-15);
}

TEST(ExpMap, ZeroTangentAndOriginReduction) {
    auto x = P({0.1, 0.4});
    EXPECT_EQ(exp_map(x, TangentVector({0.0, 0.0}, x)).coords(), x.coords());
    auto o = PoincarePoint::origin(2, kUnit);
    for (double a : {0.1, 0.7, 2.5}) {
        auto r = exp_map(o, TangentVector({a, 0.0}, o));
        EXPECT_NEAR(r.coords()[0], std::tanh(a), 1e-15);
        EXPECT_EQ(r.coords()[1], 0.0);
    }
}

TEST(ExpMap, OriginOtherCurvatures) {
    // values from tests/oracles/manifold_values.py
    auto o5 = PoincarePoint::origin(2, Curvature(-0.5));
    EXPECT_NEAR(exp_map(o5, TangentVector({0.7, 0.0}, o5)).coords()[0],
                0.64793027695729272045, 1e-15);
    auto o2 = PoincarePoint::origin(2, Curvature(-2.0));
    EXPECT_NEAR(exp_map(o2, TangentVector({0.7, 0.0}, o2)).coords()[0],
                0.53552080642073826200, 1e-15);
}

TEST(ExpMap, RejectsForeignTangent) {
    auto x = P({0.1, 0.4});
    auto y = P({0.1, 0.3});
    EXPECT_THROW(exp_map(x, TangentVector({0.1, 0.0}, y)), std::invalid_argument);
}

TEST(LogMap, Examples) {
    auto x = P({-0.3, 0.2});
    expect_near_vec(log_map(x, x).coords(), {0.0, 0.0}, 0.0);
    auto r = log_map(PoincarePoint::origin(2, kUnit), P({0.5, 0.0}));
    EXPECT_NEAR(r.coords()[0], 0.54930614433405484570, 1e-15);
    EXPECT_EQ(r.coords()[1], 0.0);
}

TEST(ScalarMul, Examples) {
    auto x = P({0.3, -0.1, 0.2});
    expect_near_vec(scalar_mul(1.0, x).coords(), x.coords(), 1e-15);
    expect_near_vec(scalar_mul(0.0, x).coords(), Vector(3, 0.0), 0.0);
    EXPECT_NEAR(scalar_mul(2.0, P({0.3, 0.0})).coords()[0], 0.55045871559633027523, 1e-15);
}

TEST(MatvecMul, Examples) {
    auto x = P({0.3, -0.1, 0.2});
    expect_near_vec(matvec_mul(Matrix::identity(3), x).coords(), x.coords(), 1e-15);
    expect_near_vec(matvec_mul(Matrix(2, 3), x).coords(), {0.0, 0.0}, 0.0);
    Matrix two = Matrix::identity(3);
    for (std::size_t i = 0; i < 3; ++i) two(i, i) = 2.0;
    expect_near_vec(matvec_mul(two, x).coords(), scalar_mul(2.0, x).coords(), 1e-15);
    EXPECT_EQ(matvec_mul(Matrix(5, 3), x).dim(), 5u);
    EXPECT_THROW(matvec_mul(Matrix(2, 2), x), dimension_error);
}

TEST(PoincareDistance, Examples) {
    auto x = P({0.2, 0.3});
    EXPECT_EQ(poincare_distance(x, x), 0.0);
    EXPECT_NEAR(poincare_distance(PoincarePoint::origin(2, kUnit), P({0.5, 0.0})),
                1.0986122886681096914, 1e-15);
    Curvature k2(-2.0);
    EXPECT_NEAR(poincare_distance(P({0.1, 0.2}, k2), P({-0.3, 0.1}, k2)),
                0.90811731155092214460, 1e-14);
    auto y = P({-0.6, 0.1});
    EXPECT_DOUBLE_EQ(poincare_distance(x, y), poincare_distance(y, x));
}

TEST(LorentzInner, Examples) {
    EXPECT_EQ(lorentz_inner(Vector{1.0, 0.0}, Vector{1.0, 0.0}), -1.0);
    EXPECT_DOUBLE_EQ(lorentz_inner(Vector{0.0, 1.0, 2.0}, Vector{0.0, 3.0, -1.0}), 1.0);
    auto z = project_D_to_L(P({0.3, 0.4}, Curvature(-2.0)));
    EXPECT_NEAR(lorentz_inner(z, z), -0.5, 1e-14);
    EXPECT_THROW(lorentz_inner(Vector{1.0, 0.0}, Vector{1.0}), dimension_error);
}

TEST(LorentzDistance, Examples) {
    auto a = LorentzPoint(1.0, {0.0, 0.0}, kUnit);
    auto b = LorentzPoint(std::cosh(1.0), {std::sinh(1.0), 0.0}, kUnit);
    EXPECT_EQ(lorentz_distance(a, a), 0.0);
    EXPECT_EQ(lorentz_distance(b, b), 0.0);
    EXPECT_NEAR(lorentz_distance(a, b), 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(lorentz_distance(a, b), lorentz_distance(b, a));
}

TEST(Projections, Examples) {
    auto pole = LorentzPoint(1.0, {0.0, 0.0, 0.0}, kUnit);
    expect_near_vec(project_L_to_D(pole).coords(), Vector(3, 0.0), 0.0);
    auto z = LorentzPoint(std::cosh(1.0), {std::sinh(1.0), 0.0}, kUnit);
    EXPECT_NEAR(project_L_to_D(z).coords()[0], 0.46211715726000975850, 1e-15);

    Curvature k(-2.0);
    auto o = project_D_to_L(PoincarePoint::origin(3, k));
    EXPECT_NEAR(o.time(), 1.0 / std::sqrt(2.0), 1e-15);
    expect_near_vec(o.space(), Vector(3, 0.0), 0.0);

    auto l = project_D_to_L(P({0.5, 0.0}));
    EXPECT_NEAR(l.time(), 5.0 / 3.0, 1e-15);
    expect_near_vec(l.space(), {4.0 / 3.0, 0.0}, 1e-15);
    EXPECT_NEAR(lorentz_inner(l, l), -1.0, 1e-14);
}

TEST(LorentzPoint, ValidatesMembership) {
    EXPECT_THROW(LorentzPoint(2.0, {0.0}, kUnit), std::invalid_argument);
    EXPECT_THROW(LorentzPoint(-1.0, {0.0}, kUnit), std::invalid_argument);
    EXPECT_NO_THROW(LorentzPoint::lift({3.0, -4.0}, kUnit));
}

TEST(ParallelTransport, Examples) {
    auto x = P({0.2, -0.4});
    TangentVector v({0.7, 1.3}, x);
    expect_near_vec(parallel_transport(x, x, v).coords(), v.coords(), 1e-15);

    auto o = PoincarePoint::origin(2, kUnit);
    TangentVector w({-0.5, 2.0}, o);
    auto there = parallel_transport(o, x, w);
    auto back = parallel_transport(x, o, there);
    expect_near_vec(back.coords(), w.coords(), 1e-14);
}

TEST(ParallelTransport, ClosedFormMatchesGyrationIdentity) {
    Rng rng(11);
    for (double kappa : {-0.5, -1.0, -2.0}) {
        const double r = 0.9 / std::sqrt(-kappa);
        for (int t = 0; t < 200; ++t) {
            Vector a = uniform_in_ball(4, r, rng);
            Vector b = uniform_in_ball(4, r, rng);
            Vector w = uniform_in_ball(4, r, rng);
            expect_near_vec(raw::gyration(a, b, w, kappa), gyration_by_identity(a, b, w, kappa),
                            1e-10);
        }
    }
}

TEST(Clip, Examples) {
    auto inside = clip(Vector{0.3, 0.4}, kUnit);
    expect_near_vec(inside.coords(), {0.3, 0.4}, 0.0);

    Rng rng(3);
    Vector near_edge = random_with_norm(3, 0.9999999, rng);
    auto c = clip(near_edge, kUnit);
    EXPECT_NEAR(c.norm(), 1.0 - 1e-5, 1e-15);
    EXPECT_LE(c.norm(), 1.0 - 1e-5);
    EXPECT_NEAR(la::dot(c.coords(), near_edge) / (c.norm() * la::norm(near_edge)), 1.0, 1e-15);

    auto tiny = clip(Vector{1e-20, 0.0}, kUnit);
    EXPECT_NEAR(tiny.norm(), 1e-15, 1e-30);
    EXPECT_GT(tiny.coords()[0], 0.0);

    auto zero = clip(Vector{0.0, 0.0}, kUnit);
    EXPECT_EQ(zero.norm(), 0.0);

    EXPECT_THROW(clip(Vector{std::nan(""), 0.0}, kUnit), numeric_fault);
    EXPECT_THROW(clip(Vector{std::numeric_limits<double>::infinity()}, kUnit), numeric_fault);
}

TEST(Clip, FarOutsideLandsOnBand) {
    Curvature k(-2.0);
    auto c = clip(Vector{1e6, -3e5}, k);
    EXPECT_LE(c.norm(), k.max_norm());
    EXPECT_NEAR(c.norm(), k.max_norm(), 1e-15);
}

TEST(ManifoldRelu, Examples) {
    auto pos = P({0.1, 0.2});
    EXPECT_EQ(manifold_relu(pos).coords(), pos.coords());
    EXPECT_EQ(manifold_relu(P({-0.3, 0.4})).coords(), (Vector{0.0, 0.4}));
}

TEST(LorentzMaps, RoundTripsAndTransport) {
    Rng rng(5);
    for (double kappa : {-0.5, -1.0, -2.0}) {
        Curvature k(kappa);
        for (int t = 0; t < 200; ++t) {
            auto x = project_D_to_L(clip(uniform_in_ball(3, 0.9 * k.radius(), rng), k));
            auto y = project_D_to_L(clip(uniform_in_ball(3, 0.9 * k.radius(), rng), k));
            auto v = lorentz_log_map(x, y);
            auto y2 = lorentz_exp_map(x, v);
            EXPECT_LT(lorentz_distance(y, y2), 1e-9);
            // transported tangent keeps its Minkowski norm
            auto pv = lorentz_parallel_transport(x, y, v);
            EXPECT_NEAR(lorentz_inner(pv.coords(), pv.coords()),
                        lorentz_inner(v.coords(), v.coords()),
                        1e-8 * std::max(1.0, lorentz_inner(v.coords(), v.coords())));
            // Lorentz and Poincare logs agree in length
            EXPECT_NEAR(std::sqrt(std::max(0.0, lorentz_inner(v.coords(), v.coords()))),
                        lorentz_distance(x, y), 1e-9);
        }
    }
}

TEST(EuclideanLimit, MobiusAddApproachesSum) {
    Curvature k(-1e-8);
    Rng rng(2);
    for (int t = 0; t < 1000; ++t) {
        Vector x = uniform_in_ball(5, 0.1, rng);
        Vector y = uniform_in_ball(5, 0.1, rng);
        auto s = mobius_add(PoincarePoint(x, k), PoincarePoint(y, k));
        EXPECT_LE(la::max_abs_diff(s.coords(), la::lincomb(1.0, x, 1.0, y)), 1e-6);
        double d = poincare_distance(PoincarePoint(x, k), PoincarePoint(y, k));
        EXPECT_NEAR(d / (2.0 * la::norm(la::sub(x, y))), 1.0, 1e-6);
    }
}
