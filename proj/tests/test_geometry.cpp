// SPDX-License-Identifier: Apache-2.0
#include "folxray/geometry.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace folxray;

namespace {

GeometrySpec conformal(double eps) {
    GeometrySpec s;
    s.metric = MetricKind::conformal;
    s.metric_epsilon = eps;
    return s;
}

double max_abs(const std::array<Mat3, 3>& g) {
    double m = 0.0;
    for (const auto& k : g) m = std::max(m, k.cwiseAbs().maxCoeff());
    return m;
}

} // namespace

TEST(Christoffel, EuclideanVanishes) {
    const Geometry g;
    EXPECT_EQ(max_abs(g.christoffel(Vec3(2, 0, 0))), 0.0);
}

TEST(Christoffel, ConformalZeroEpsilonIsEuclidean) {
    const Geometry g(conformal(0.0));
    EXPECT_EQ(max_abs(g.christoffel(Vec3(2.3, 0.2, -0.4))), 0.0);
}

TEST(Christoffel, MatchesFiniteDifferenceOfMetric) {
    const Geometry g(conformal(0.05));
    const Vec3 c(2, 0, 0);
    auto metric = [&](const Vec3& p, int i, int j) {
        return (i == j ? 1.0 : 0.0) * (1.0 + 0.05 * std::exp(-(p - c).squaredNorm()));
    };
    for (const Vec3& z : {Vec3(2, 0, 0), Vec3(2.4, -0.3, 0.5)}) {
        const double d = 1e-4;
        double dg[3][3][3]; // dg[l][i][j] = ∂_l g_ij
        for (int l = 0; l < 3; ++l)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    Vec3 e = Vec3::Zero();
                    e[l] = d;
                    dg[l][i][j] = (metric(z + e, i, j) - metric(z - e, i, j)) / (2 * d);
                }
        const double ginv = 1.0 / metric(z, 0, 0);
        const auto G = g.christoffel(z);
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const double ref = 0.5 * ginv * (dg[i][j][k] + dg[j][i][k] - dg[k][i][j]);
                    EXPECT_NEAR(G[k](i, j), ref, 1e-6);
                    EXPECT_DOUBLE_EQ(G[k](i, j), G[k](j, i));
                }
    }
}

TEST(Christoffel, OutsideMprimeIsDomainError) {
    const Geometry g;
    EXPECT_THROW(g.christoffel(Vec3(0, 0, 0)), DomainError);
}

TEST(Trace, EuclideanStraightLine) {
    const Geometry g;
    const auto tr = g.trace_geodesic(Vec3(2, 0, 0), Vec3(0, 1, 0), 1e-2);
    ASSERT_TRUE(tr.exited_forward && tr.exited_backward);
    for (const auto& s : tr.samples) EXPECT_LE((s.z - Vec3(2, s.t, 0)).norm(), 1e-10);
    EXPECT_NEAR(tr.t_exit_plus, 1.1, 1e-12);
    EXPECT_NEAR(tr.t_exit_minus, -1.1, 1e-12);
}

TEST(Trace, SpeedTwoRescalesParameter) {
    const Geometry g;
    const auto a = g.trace_geodesic(Vec3(2, 0, 0), Vec3(0, 1, 0), 1e-2);
    const auto b = g.trace_geodesic(Vec3(2, 0, 0), Vec3(0, 2, 0), 5e-3);
    ASSERT_EQ(a.samples.size(), b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        EXPECT_LE((a.samples[i].z - b.samples[i].z).norm(), 1e-12);
        EXPECT_NEAR(b.samples[i].t, a.samples[i].t / 2.0, 1e-14);
    }
    EXPECT_NEAR(b.t_exit_plus, a.t_exit_plus / 2.0, 1e-12);
}

namespace {
// max position error of a trace at `step` against one at step/`refine`,
// compared at shared parameters
double trace_error(const Geometry& g, const Vec3& z, const Vec3& v, double step, int refine) {
    const auto a = g.trace_geodesic(z, v, step);
    const auto b = g.trace_geodesic(z, v, step / refine);
    // index of t = 0 in each
    std::size_t ia = 0, ib = 0;
    while (a.samples[ia].t != 0.0) ++ia;
    while (b.samples[ib].t != 0.0) ++ib;
    double err = 0.0;
    for (std::size_t i = a.first_inside(); i < a.end_inside(); ++i) {
        const long off = static_cast<long>(i) - static_cast<long>(ia);
        const long j = static_cast<long>(ib) + off * refine;
        if (j < 0 || j >= static_cast<long>(b.samples.size())) continue;
        EXPECT_NEAR(b.samples[j].t, a.samples[i].t, 1e-12);
        err = std::max(err, (a.samples[i].z - b.samples[j].z).norm());
    }
    return err;
}
} // namespace

TEST(Trace, ConformalSelfConvergence) {
    const Geometry g(conformal(0.05));
    const Vec3 z(2.3, 0.2, -0.1), v = Vec3(0.2, 1.0, 0.4).normalized();
    EXPECT_LE(trace_error(g, z, v, 1e-2, 10), 1e-7);
}

TEST(Trace, FourthOrderRate) {
    const Geometry g(conformal(0.3));
    const Vec3 z(2.0, 0.0, 0.0), v = Vec3(0.1, 1.0, 0.3).normalized();
    const double e1 = trace_error(g, z, v, 0.08, 16);
    const double e2 = trace_error(g, z, v, 0.04, 8);
    EXPECT_GE(e1 / e2, 12.0);
}

TEST(Trace, EnergyConservation) {
    const Geometry g(conformal(0.05));
    std::mt19937_64 rng(7);
    for (int n = 0; n < 50; ++n) {
        const Vec3 z = random_point_in_ball(rng, Vec3(2, 0, 0), 1.0);
        const Vec3 v(uniform01(rng) - 0.5, uniform01(rng) - 0.5, uniform01(rng) - 0.5);
        const auto tr = g.trace_geodesic(z, v, 1e-2);
        const double e0 = g.inner(z, v, v);
        for (const auto& s : tr.samples) EXPECT_LE(std::abs(g.inner(s.z, s.v, s.v) - e0), 1e-8);
    }
}

TEST(Trace, TangentialGeodesicsMonotone) {
    const Geometry g;
    std::mt19937_64 rng(11);
    for (int n = 0; n < 100; ++n) {
        const Vec3 z = random_point_in_ball(rng, Vec3(2, 0, 0), 1.1);
        const Vec3 v = g.leaf_direction(z, 2 * kPi * uniform01(rng));
        const auto tr = g.trace_geodesic(z, v, 1e-2);
        for (const auto& s : tr.samples) {
            if (s.t == 0.0) continue;
            EXPECT_GT(s.t * g.grad_x(s.z).dot(s.v), 0.0);
        }
    }
}

TEST(Trace, InvalidArguments) {
    const Geometry g;
    EXPECT_THROW(g.trace_geodesic(Vec3(2, 0, 0), Vec3::Zero(), 1e-2), ArgumentError);
    EXPECT_THROW(g.trace_geodesic(Vec3(2, 0, 0), Vec3(0, 1, 0), 0.0), ArgumentError);
    EXPECT_THROW(g.trace_geodesic(Vec3(5, 0, 0), Vec3(0, 1, 0), 1e-2), DomainError);
}

TEST(Tangent, LeafTangentHasNoLambda) {
    const Geometry g;
    const auto d = g.decompose_tangent(Vec3(2, 0, 0), Vec3(0, 1, 0));
    EXPECT_EQ(d.lambda, 0.0);
    EXPECT_LE((d.omega - Vec3(0, 1, 0)).norm(), 1e-15);
}

TEST(Tangent, TransverseHasNoOmega) {
    const Geometry g;
    const Vec3 z(2, 0, 0);
    const auto d = g.decompose_tangent(z, g.grad_x(z).normalized());
    EXPECT_LE(d.omega.norm(), 1e-15);
    EXPECT_NEAR(d.lambda, 4.0, 1e-15);
}

TEST(Tangent, RandomRoundTrip) {
    for (const auto& spec : {GeometrySpec{}, conformal(0.2)}) {
        const Geometry g(spec);
        std::mt19937_64 rng(3);
        for (int n = 0; n < 1000; ++n) {
            const Vec3 z = random_point_in_ball(rng, Vec3(2, 0, 0), 1.1);
            const Vec3 v(uniform01(rng) - 0.5, uniform01(rng) - 0.5, uniform01(rng) - 0.5);
            const auto d = g.decompose_tangent(z, v);
            EXPECT_LE((g.compose_tangent(z, d.lambda, d.omega) - v).norm(), 1e-12);
            EXPECT_LE(std::abs(g.grad_x(z).dot(d.omega)), 1e-12);
        }
    }
}

TEST(Tangent, LeafFrameIsOrthonormalInMetric) {
    const Geometry g(conformal(0.2));
    const Vec3 z(2.2, 0.3, -0.4);
    const auto [a, b] = g.leaf_frame(z);
    EXPECT_NEAR(g.inner(z, a, a), 1.0, 1e-14);
    EXPECT_NEAR(g.inner(z, b, b), 1.0, 1e-14);
    EXPECT_NEAR(g.inner(z, a, b), 0.0, 1e-14);
    EXPECT_NEAR(g.grad_x(z).dot(a), 0.0, 1e-14);
}

TEST(Alpha, EuclideanUnitSpeed) {
    const Geometry g;
    const Vec3 z(2.1, 0.2, 0.3);
    EXPECT_NEAR(g.alpha(z, 0.0, g.leaf_direction(z, 0.4)), 1.0, 1e-10);
}

TEST(Alpha, Homogeneous) {
    const Geometry g;
    const Vec3 z(2.1, 0.2, 0.3);
    EXPECT_NEAR(g.alpha(z, 0.0, 3.0 * g.leaf_direction(z, 1.3)), 9.0, 1e-9);
}

TEST(Alpha, ConformalMatchesFiniteDifferenceOfTrace) {
    const Geometry g(conformal(0.05));
    const Vec3 z(2.2, -0.1, 0.3);
    const Vec3 om = g.leaf_direction(z, 0.9);
    // oracle: second difference of x along a finely traced geodesic
    const double d = 5e-3;
    const auto tr = g.trace_geodesic(z, om, d / 4.0);
    auto x_at = [&](double t) {
        for (const auto& s : tr.samples)
            if (std::abs(s.t - t) < 1e-12) return g.x(s.z);
        ADD_FAILURE() << "missing sample at t = " << t;
        return 0.0;
    };
    const double ref = 0.5 * (-x_at(-2 * d) + 16 * x_at(-d) - 30 * g.x(z) + 16 * x_at(d) - x_at(2 * d)) / (12 * d * d);
    EXPECT_NEAR(g.alpha(z, 0.0, om), ref, 1e-5);
}

TEST(Certificate, EuclideanC0IsTwo) {
    const Geometry g;
    const auto c = certify_convexity(g);
    EXPECT_NEAR(c.C0, 2.0, 1e-9);
    EXPECT_NEAR(c.T_bound, 2.0 * c.epsilon / c.C0 + 4.0 * 9.61 / c.epsilon, 1e-9);
    EXPECT_NEAR(c.T_bound, 39.44, 1e-8);
    EXPECT_NEAR(c.C1, 9.61, 1e-12);
    EXPECT_LE(c.max_exit, 2.3);
    EXPECT_GT(c.C_quad, 0.0);
}

TEST(Certificate, QuadraticLowerBoundOnFreshSample) {
    const Geometry g;
    const auto c = certify_convexity(g);
    // independent draw, straight-line oracle for the Euclidean geodesic
    std::mt19937_64 rng(99);
    for (int n = 0; n < 1000; ++n) {
        const Vec3 z = random_point_in_ball(rng, Vec3(2, 0, 0), 1.1);
        const double lambda = (2 * uniform01(rng) - 1) * c.lambda0 * 0.999;
        const Vec3 v = g.compose_tangent(z, lambda, g.leaf_direction(z, 2 * kPi * uniform01(rng)));
        const auto [tm, tp] = oracle::chord(z, v, Vec3(2, 0, 0), 1.1);
        for (int k = 0; k <= 200; ++k) {
            const double t = tm + (tp - tm) * k / 200.0;
            const double xt = (z + t * v).squaredNorm();
            EXPECT_GE(xt, g.x(z) + lambda * t + 0.5 * c.C_quad * t * t - 1e-12);
        }
    }
}

TEST(Certificate, ConformalPasses) {
    const Geometry g(conformal(0.05));
    const auto c = certify_convexity(g);
    EXPECT_GT(c.C0, 1.5);
    EXPECT_LE(c.max_exit, c.T_bound);
}

TEST(Certificate, FoliationCentreInsideIsDegenerate) {
    GeometrySpec s;
    s.foliation_center = Vec3(2, 0, 0);
    EXPECT_THROW(Geometry{s}, DegenerateFoliationError);
}

TEST(Certificate, TooFewSamples) {
    const Geometry g;
    CertifyOptions o;
    o.n_samples = 10;
    EXPECT_THROW(certify_convexity(g, o), ArgumentError);
}

TEST(Geometry, InvalidSpecs) {
    GeometrySpec s;
    s.radius_Mprime = 0.9;
    EXPECT_THROW(Geometry{s}, ConfigError);
    EXPECT_THROW(Geometry{conformal(-2.0)}, ConfigError);
}

TEST(Geometry, HashTracksSpec) {
    EXPECT_EQ(Geometry().hash(), Geometry().hash());
    EXPECT_NE(Geometry().hash(), Geometry(conformal(0.05)).hash());
}
