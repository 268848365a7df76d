// SPDX-License-Identifier: Apache-2.0
#include "folxray/inversion.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace folxray;

namespace {

const ConvexityCertificate& cert() {
    static const ConvexityCertificate c = certify_convexity(Geometry{});
    return c;
}

NormalOpConfig cfg_h(double h, WeightVariant v = WeightVariant::global) {
    NormalOpConfig c;
    c.h = h;
    c.variant = v;
    return c;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("folxray_inv_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

} // namespace

// --- GMRES ----------------------------------------------------------------------

TEST(Gmres, ZeroRightHandSide) {
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(5, 5) * 3.0;
    const auto r = solve_normal(A, Eigen::VectorXd::Zero(5), SolveOptions{});
    EXPECT_EQ(r.iterations, 0);
    EXPECT_EQ(r.x.norm(), 0.0);
}

TEST(Gmres, NonsymmetricDenseSystem) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> N;
    Eigen::MatrixXd A(60, 60);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = 0.1 * N(rng);
    A.diagonal().array() += 2.0;
    Eigen::VectorXd x(60);
    for (auto& v : x) v = N(rng);
    const Eigen::VectorXd b = A * x;
    const auto r = solve_normal(A, b, SolveOptions{1e-10, 500, 20, 1e-3});
    EXPECT_LE(r.residual, 1e-10);
    EXPECT_LE((A * r.x - b).norm() / b.norm(), 1e-10);
    EXPECT_LE((r.x - A.partialPivLu().solve(b)).norm() / x.norm(), 1e-9);
}

TEST(Gmres, BadArguments) {
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
    EXPECT_THROW(solve_normal(A, Eigen::VectorXd::Ones(4), SolveOptions{}), ArgumentError);
    EXPECT_THROW(solve_normal(Eigen::MatrixXd::Identity(3, 4), Eigen::VectorXd::Ones(3), SolveOptions{}), ArgumentError);
    EXPECT_THROW(solve_normal(A, Eigen::VectorXd::Ones(3), SolveOptions{0.0, 10, 5, 1e-3}), ArgumentError);
}

TEST(Gmres, MaxIterExhausted) {
    // eigenvalues spread over two decades: 3 iterations are not enough
    Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(40, 0.01, 1.0);
    const Eigen::MatrixXd A = d.asDiagonal();
    EXPECT_THROW(solve_normal(A, Eigen::VectorXd::Ones(40), SolveOptions{1e-12, 3, 50, 0.0}), ConvergenceError);
}

TEST(Gmres, ManufacturedBumpOnGrid) {
    const Geometry g;
    const NormalOperator op(g, cfg_h(0.1), cert());
    const GridSpec grid = grid_covering_Mprime(g, 11);
    const auto m = op.assemble_A(grid);
    const Eigen::VectorXd f = m.restrict(Phantom::gaussian(Vec3(2, 0, 0), 0.45).sample(grid, g).values);
    const auto r = solve_normal(m.A, m.A * f, SolveOptions{1e-8, 500, 50, 1e-3});
    EXPECT_LE(r.residual, 1e-8);
    EXPECT_LE((r.x - f).norm() / f.norm(), 1e-6);
}

TEST(Gmres, DegenerateCutoffStagnates) {
    const Geometry g;
    NormalOpConfig c = cfg_h(0.1);
    c.cutoff.Lambda = 0.0;
    const NormalOperator op(g, c, cert());
    const auto m = op.assemble_A(grid_covering_Mprime(g, 7));
    ASSERT_GT(m.A.rows(), 0);
    EXPECT_EQ(m.A.norm(), 0.0);
    EXPECT_THROW(solve_normal(m.A, Eigen::VectorXd::Ones(m.A.rows()), SolveOptions{}), ConvergenceError);
}

// --- reconstruction --------------------------------------------------------------

TEST(Reconstruct, GaussianBump13) {
    const Geometry g;
    const NormalOperator op(g, cfg_h(0.1), cert());
    const GridSpec grid = grid_covering_Mprime(g, 13);
    const Phantom ph = Phantom::gaussian(Vec3(2, 0, 0), 0.45);
    const GridFunction truth = ph.sample(grid, g);
    const auto rec = reconstruct(op, phantom_sinogram(op, ph, grid), grid, SolveOptions{}, &truth);
    const auto& rep = rec.report;
    EXPECT_LE(*rep.rel_l2_error, 0.05);
    EXPECT_LE(rep.residual, 1e-8);
    EXPECT_GT(rep.iterations, 0);
    EXPECT_EQ(rep.unknowns, static_cast<std::size_t>(std::count(truth.support_mask.begin(), truth.support_mask.end(), 1)));
    EXPECT_EQ(rep.variant, "global");
    EXPECT_EQ(rep.dims, (std::array<int, 3>{13, 13, 13}));
    EXPECT_GT(rep.stability_ratio, 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!truth.support_mask[i]) EXPECT_EQ(rec.f.values[i], 0.0);
        // g = e^{-Phi/h} f with Phi = -x
        EXPECT_NEAR(rec.g.values[i], std::exp(g.x(grid.node(i)) / 0.1) * rec.f.values[i],
                    1e-12 * std::abs(rec.g.values[i]) + 1e-300);
    }
}

TEST(Reconstruct, ZeroData) {
    const Geometry g;
    const NormalOperator op(g, cfg_h(0.1), cert());
    const GridSpec grid = grid_covering_Mprime(g, 7);
    Sinogram d = phantom_sinogram(op, Phantom::sum({}), grid);
    const auto rec = reconstruct(op, d, grid, SolveOptions{});
    for (double v : rec.f.values) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(rec.report.iterations, 0);
    EXPECT_EQ(rec.report.stability_ratio, 0.0);
}

TEST(Reconstruct, TwoBumpsResolved) {
    const Geometry g;
    const NormalOperator op(g, cfg_h(0.1), cert());
    const GridSpec grid = grid_covering_Mprime(g, 13);
    const Vec3 c1(1.7, 0, 0), c2(2.3, 0, 0);
    const Phantom ph = Phantom::sum({{c1, 0.25, 1.0}, {c2, 0.25, 1.0}});
    const auto rec = reconstruct(op, phantom_sinogram(op, ph, grid), grid, SolveOptions{});
    // largest value in each half space x < 2, x > 2
    std::size_t best[2] = {0, 0};
    double bv[2] = {-1, -1};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Vec3 p = grid.node(i);
        const int side = p[0] < 2.0 ? 0 : 1;
        if (std::abs(p[0] - 2.0) < 1e-9) continue;
        if (rec.f.values[i] > bv[side]) {
            bv[side] = rec.f.values[i];
            best[side] = i;
        }
    }
    EXPECT_LE((grid.node(best[0]) - c1).cwiseAbs().maxCoeff(), grid.spacing);
    EXPECT_LE((grid.node(best[1]) - c2).cwiseAbs().maxCoeff(), grid.spacing);
    // a dip between them
    const std::size_t mid = grid.index(6, 6, 6);
    EXPECT_NEAR(grid.node(mid)[0], 2.0, 1e-12);
    EXPECT_LT(rec.f.values[mid], 0.8 * std::min(bv[0], bv[1]));
}

TEST(Reconstruct, GeometryMismatch) {
    const Geometry g;
    const NormalOperator op(g, cfg_h(0.1), cert());
    const GridSpec grid = grid_covering_Mprime(g, 7);
    GeometrySpec other;
    other.radius_Mprime = 1.2;
    const Geometry g2(other);
    const NormalOperator op2(g2, cfg_h(0.1), certify_convexity(g2));
    const Sinogram d = phantom_sinogram(op2, Phantom::gaussian(Vec3(2, 0, 0), 0.4), grid);
    EXPECT_THROW(reconstruct(op, d, grid, SolveOptions{}), ArgumentError);
}

TEST(Reconstruct, ScatteringLayer) {
    const Geometry g;
    const NormalOperator op(g, cfg_h(0.1, WeightVariant::scattering), cert());
    const GridSpec grid = grid_covering_Mprime(g, 13);
    const Phantom ph = Phantom::gaussian(Vec3(2, 0, 0), 0.45);
    const GridFunction truth = ph.sample(grid, g);
    const auto rec = reconstruct(op, phantom_sinogram(op, ph, grid), grid, SolveOptions{}, &truth);
    EXPECT_EQ(rec.report.variant, "scattering");
    EXPECT_LE(*rec.report.rel_l2_error, 0.08);
}

// reconstruct(forward data) against a solve whose right-hand side is built
// from apply_A(e^{-Phi/h} f): the data paths share no code before the solve
TEST(Reconstruct, ConjugationIdentity) {
    const Geometry g;
    for (double h : {0.4, 0.2}) {
        const NormalOperator op(g, cfg_h(h), cert());
        const GridSpec grid = grid_covering_Mprime(g, 9);
        const Phantom ph = Phantom::gaussian(Vec3(2.1, 0.1, 0), 0.4);
        const SolveOptions so;
        const auto rec = reconstruct(op, phantom_sinogram(op, ph, grid), grid, so);
        const auto LI = op.assemble_LI(grid);
        Eigen::VectorXd b(static_cast<Eigen::Index>(LI.nodes.size()));
        auto damped = [&](const Vec3& p) { return std::exp(g.x(p) / h) * ph(p); };
        for (std::size_t i = 0; i < LI.nodes.size(); ++i) {
            const Vec3 z = grid.node(LI.nodes[i]);
            b[static_cast<Eigen::Index>(i)] = std::exp(-g.x(z) / h) * op.apply_A_at(damped, z);
        }
        const auto s = solve_normal(LI.A, b, so);
        const Eigen::VectorXd f1 = LI.restrict(rec.f.values);
        EXPECT_LE((s.x - f1).norm() / f1.norm(), 10 * so.tol) << h;
    }
}

TEST(Reconstruct, LeftInverseOnRandomFields) {
    const Geometry g;
    const NormalOperator op(g, cfg_h(0.1), cert());
    const GridSpec grid = grid_covering_Mprime(g, 9);
    const auto m = op.assemble_A(grid);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(-1, 1);
    const SolveOptions so;
    for (int k = 0; k < 10; ++k) {
        // smooth field: a few random Gaussians inside M
        std::vector<Bump> bumps;
        for (int j = 0; j < 3; ++j) bumps.push_back({Vec3(2 + 0.5 * U(rng), 0.5 * U(rng), 0.5 * U(rng)), 0.3 + 0.1 * U(rng), U(rng)});
        const Eigen::VectorXd f = m.restrict(Phantom::sum(bumps).sample(grid, g).values);
        const auto r = solve_normal(m.A, m.A * f, so);
        EXPECT_LE((r.x - f).norm() / f.norm(), 10 * so.tol) << k;
    }
}

TEST(Reconstruct, StabilityProxyAcrossFamily) {
    const Geometry g;
    const NormalOperator op(g, cfg_h(0.1), cert());
    const GridSpec grid = grid_covering_Mprime(g, 9);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int k = 0; k < 10; ++k) {
        const Phantom ph = Phantom::gaussian(Vec3(2 + 0.3 * std::cos(k), 0.3 * std::sin(k), 0.1 * (k % 3 - 1)),
                                             0.3 + 0.03 * k, 1.0 + 0.2 * k);
        const auto rec = reconstruct(op, phantom_sinogram(op, ph, grid), grid, SolveOptions{});
        const double s = rec.report.stability_ratio;
        ASSERT_TRUE(std::isfinite(s));
        ASSERT_GT(s, 0.0);
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    EXPECT_LE(hi / lo, 10.0);
}

// --- injectivity ------------------------------------------------------------------

TEST(Injectivity, IdentityMatrix) {
    const auto r = injectivity_probe(Eigen::MatrixXd::Identity(20, 20));
    EXPECT_DOUBLE_EQ(r.sigma_min, 1.0);
    EXPECT_DOUBLE_EQ(r.sigma_max, 1.0);
    EXPECT_DOUBLE_EQ(r.ratio, 1.0);
    EXPECT_EQ(r.size, 20u);
}

TEST(Injectivity, SizeGuard) {
    EXPECT_THROW(injectivity_probe(Eigen::MatrixXd::Zero(13 * 13 * 13 + 1, 1)), PreconditionError);
    EXPECT_EQ(injectivity_probe(Eigen::MatrixXd(0, 0)).size, 0u);
}

TEST(Injectivity, DefaultGridFullRank) {
    const Geometry g;
    const NormalOperator op(g, cfg_h(0.1), cert());
    const auto A = op.assemble_A(grid_covering_Mprime(g, 9)).A;
    const auto r = injectivity_probe(A);
    EXPECT_GT(r.sigma_min, 0.0);
    EXPECT_GE(r.ratio, 1e-6);
    // independent check of the smallest singular value via the Gram matrix
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A.transpose() * A);
    EXPECT_NEAR(std::sqrt(es.eigenvalues()[0]), r.sigma_min, 1e-6 * r.sigma_max);
}

TEST(Injectivity, SigmaOverHBoundedBelow) {
    const Geometry g;
    std::vector<double> q;
    for (double h : {0.2, 0.1, 0.05}) {
        const NormalOperator op(g, cfg_h(h), cert());
        q.push_back(injectivity_probe(op.assemble_A(grid_covering_Mprime(g, 9)).A).sigma_min / h);
    }
    // no collapse as h decreases
    for (double v : q) EXPECT_GE(v, 0.5 * q.front());
}

// --- h sweep ---------------------------------------------------------------------------

TEST(HSweep, ArgumentChecks) {
    const Geometry g;
    const Phantom ph = Phantom::gaussian(Vec3(2, 0, 0), 0.45);
    EXPECT_THROW(h_sweep(g, cfg_h(0.1), cert(), ph, {}, 9, SolveOptions{}), ArgumentError);
    EXPECT_THROW(h_sweep(g, cfg_h(0.1), cert(), ph, {0.2, 0.1}, 9, SolveOptions{}), ArgumentError);
}

TEST(HSweep, ThreeRowsFiniteErrors) {
    const Geometry g;
    const auto rows = h_sweep(g, cfg_h(0.1), cert(), Phantom::gaussian(Vec3(2, 0, 0), 0.45), {0.4, 0.2, 0.1}, 9,
                              SolveOptions{}, true);
    ASSERT_EQ(rows.size(), 3u);
    const double hs[3] = {0.4, 0.2, 0.1};
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(rows[i].status, "ok") << rows[i].message;
        EXPECT_EQ(rows[i].h, hs[i]);
        ASSERT_TRUE(rows[i].rel_l2_error.has_value());
        EXPECT_TRUE(std::isfinite(*rows[i].rel_l2_error));
        EXPECT_TRUE(std::isfinite(*rows[i].rel_sup_error));
        ASSERT_TRUE(rows[i].sigma_min.has_value());
        EXPECT_GT(*rows[i].sigma_min, 0.0);
        const std::string row = rows[i].csv_row(), head = SolveReport::csv_header();
        EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(head.begin(), head.end(), ','));
    }
}

TEST(HSweep, ScatteringRowsTagged) {
    const Geometry g;
    const auto rows = h_sweep(g, cfg_h(0.1, WeightVariant::scattering), cert(), Phantom::gaussian(Vec3(2, 0, 0), 0.45),
                              {0.4, 0.2, 0.1}, 9, SolveOptions{});
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.variant, "scattering");
        EXPECT_EQ(r.status, "ok") << r.message;
    }
}

TEST(HSweep, FailuresRecordedPerRow) {
    const Geometry g;
    ConvexityCertificate c = cert();
    c.lambda0 = 2.0; // 8 sqrt(h) exceeds it for h = 0.4, 0.2; not for 0.05
    const auto rows = h_sweep(g, cfg_h(0.1), c, Phantom::gaussian(Vec3(2, 0, 0), 0.45), {0.4, 0.2, 0.05}, 7,
                              SolveOptions{});
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].status, "failed");
    EXPECT_EQ(rows[1].status, "failed");
    EXPECT_FALSE(rows[0].message.empty());
    EXPECT_EQ(rows[2].status, "ok") << rows[2].message;
    EXPECT_EQ(rows[0].h, 0.4);
}

// --- FXGF ----------------------------------------------------------------------------

TEST(GridFile, RoundTrip) {
    const Geometry g;
    const GridSpec grid = grid_covering_Mprime(g, 7);
    GridFunction f = Phantom::gaussian(Vec3(2, 0.1, 0), 0.4).sample(grid, g);
    const auto dir = scratch_dir("fxgf");
    write_grid_function(dir / "f.fxgf", f);
    const GridFunction r = read_grid_function(dir / "f.fxgf");
    EXPECT_EQ(r.grid.dims, f.grid.dims);
    EXPECT_EQ(r.grid.origin, f.grid.origin);
    EXPECT_EQ(r.grid.spacing, f.grid.spacing);
    EXPECT_EQ(r.values, f.values);
    EXPECT_EQ(r.support_mask, f.support_mask);
    const auto side = io::json::parse(std::ifstream(dir / "f.fxgf.json"));
    EXPECT_EQ(side["magic"], "FXGF");
    // header bytes
    std::ifstream is(dir / "f.fxgf", std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    EXPECT_EQ(std::string(magic, 4), "FXGF");
    EXPECT_EQ(std::filesystem::file_size(dir / "f.fxgf"), 64 + 9 * grid.size());
}

TEST(GridFile, BadFiles) {
    const auto dir = scratch_dir("fxgf_bad");
    EXPECT_THROW(read_grid_function(dir / "missing.fxgf"), IoError);
    {
        std::ofstream os(dir / "short.fxgf", std::ios::binary);
        os << "FXGF";
    }
    EXPECT_THROW(read_grid_function(dir / "short.fxgf"), IoError);
    {
        std::ofstream os(dir / "magic.fxgf", std::ios::binary);
        os << std::string(64, 'x');
    }
    EXPECT_THROW(read_grid_function(dir / "magic.fxgf"), IoError);
    const Geometry g;
    GridFunction f(grid_covering_Mprime(g, 5), g);
    write_grid_function(dir / "t.fxgf", f);
    std::filesystem::resize_file(dir / "t.fxgf", 64 + 8 * 100);
    EXPECT_THROW(read_grid_function(dir / "t.fxgf"), IoError);
}
