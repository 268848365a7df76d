// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "folxray/config.hpp"

#include <chrono>
#include <ctime>
#include <iostream>

namespace folxray::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

inline int exit_code(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::validation: return kExitValidation;
    case ErrorKind::numeric: return kExitNumeric;
    case ErrorKind::io: return kExitIo;
    }
    return kExitNumeric;
}

/// Output directory of one invocation:
/// <root>/run-<UTC timestamp>-<hash of command and resolved config>.
/// An existing directory is never reused; a numeric suffix is appended.
inline std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command,
                                          const ExperimentConfig& cfg) {
    Fnv1a h;
    h.add(command);
    h.add(emit_config(cfg));
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
    const std::string base = std::string("run-") + stamp + "-" + hex64(h.value()).substr(0, 8);
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw IoError("cannot create output root '" + root.string() + "': " + ec.message());
    for (int k = 0; k < 10000; ++k) {
        const auto dir = root / (k == 0 ? base : base + "-" + std::to_string(k));
        if (std::filesystem::create_directory(dir, ec)) return dir;
        if (ec) throw IoError("cannot create run directory '" + dir.string() + "': " + ec.message());
    }
    throw IoError("could not allocate a fresh run directory under '" + root.string() + "'");
}

/// What a subcommand produced: files written into the run directory and a
/// JSON summary (also echoed to stdout in compact form).
struct Outcome {
    io::json summary = io::json::object();
    std::vector<std::string> files;
    int code = kExitOk;
};

inline ConvexityCertificate certificate_for(const Geometry& g, const ExperimentConfig& cfg) {
    return certify_convexity(g, cfg.certify);
}

inline io::json certificate_json(const ConvexityCertificate& c) {
    return {{"epsilon", c.epsilon}, {"C0", c.C0},           {"C1", c.C1},
            {"T_bound", c.T_bound}, {"lambda0", c.lambda0}, {"C_quad", c.C_quad},
            {"max_exit", c.max_exit}, {"n_samples", c.n_samples}};
}

inline io::json vec_json(const Vec3& v) { return io::json::array({v[0], v[1], v[2]}); }

// ---------------------------------------------------------------------------
// subcommands

inline Outcome run_trace(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    const Geometry g(cfg.geometry);
    const auto tr = g.trace_geodesic(cfg.trace_point, cfg.trace_direction, cfg.trace_step);
    std::ostringstream csv;
    csv << "t,x,y,z,vx,vy,vz,xfol\n";
    for (const auto& s : tr.samples)
        csv << io::fmt(s.t) << ',' << io::fmt(s.z[0]) << ',' << io::fmt(s.z[1]) << ',' << io::fmt(s.z[2]) << ','
            << io::fmt(s.v[0]) << ',' << io::fmt(s.v[1]) << ',' << io::fmt(s.v[2]) << ',' << io::fmt(g.x(s.z)) << '\n';
    io::write_text(dir / "trace.csv", csv.str());
    Outcome o;
    o.files = {"trace.csv"};
    o.summary = {{"samples", tr.samples.size()},
                 {"exited_forward", tr.exited_forward},
                 {"exited_backward", tr.exited_backward},
                 {"t_exit_plus", tr.t_exit_plus},
                 {"t_exit_minus", tr.t_exit_minus},
                 {"z_exit_plus", vec_json(tr.z_exit_plus)},
                 {"z_exit_minus", vec_json(tr.z_exit_minus)}};
    return o;
}

inline Outcome run_certify(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    const Geometry g(cfg.geometry);
    const auto c = certificate_for(g, cfg);
    Outcome o;
    o.summary = certificate_json(c);
    io::write_json(dir / "certificate.json", o.summary);
    o.files = {"certificate.json"};
    return o;
}

inline Outcome run_forward(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    const Geometry g(cfg.geometry);
    cfg.phantom.check_support(g);
    const NormalOperator op(g, cfg.normal_op, certificate_for(g, cfg));
    const GridSpec grid = grid_covering_Mprime(g, cfg.grid_n);
    const Sinogram s = phantom_sinogram(op, cfg.phantom, grid);
    write_sinogram(dir / "sinogram.fxsg", s);
    Outcome o;
    o.files = {"sinogram.fxsg", "sinogram.fxsg.json"};
    double sup = 0.0;
    for (double v : s.data) sup = std::max(sup, std::abs(v));
    o.summary = {{"base_points", s.n_base()},
                 {"lambda_nodes", s.lambda_nodes.size()},
                 {"omega_nodes", s.omega_nodes.size()},
                 {"sup", sup}};
    return o;
}

inline Outcome run_apply(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    const Geometry g(cfg.geometry);
    cfg.phantom.check_support(g);
    const NormalOperator op(g, cfg.normal_op, certificate_for(g, cfg));
    const GridSpec grid = grid_covering_Mprime(g, cfg.grid_n);
    const GridFunction Af = op.apply_A(cfg.phantom, grid);
    write_grid_function(dir / "apply_A.fxgf", Af);
    Outcome o;
    o.files = {"apply_A.fxgf", "apply_A.fxgf.json"};
    double sup = 0.0, l2 = 0.0;
    for (double v : Af.values) {
        sup = std::max(sup, std::abs(v));
        l2 += v * v;
    }
    o.summary = {{"variant", to_string(cfg.normal_op.variant)},
                 {"h", cfg.normal_op.h},
                 {"dims", grid.dims},
                 {"sup", sup},
                 {"l2", std::sqrt(l2 * grid.spacing * grid.spacing * grid.spacing)}};
    if (cfg.write_matrix) {
        const auto A = op.assemble_A(grid);
        write_matrix(dir / "A.fxmt", A,
                     {{"variant", to_string(cfg.normal_op.variant)}, {"h", cfg.normal_op.h}, {"dims", grid.dims}});
        o.files.push_back("A.fxmt");
        o.files.push_back("A.fxmt.json");
        o.summary["matrix_size"] = A.A.rows();
    }
    return o;
}

inline Outcome run_symbol(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    const Geometry g(cfg.geometry);
    const NormalOperator op(g, cfg.normal_op, certificate_for(g, cfg));
    const SymbolCalculator sc(op, cfg.symbol);
    const Vec3 z = cfg.geometry.center_M;
    const double h = cfg.normal_op.h;
    if (h > 0.5) throw ConfigError("symbol quadrature needs normal_op.h <= 0.5");
    std::ostringstream csv;
    csv << "xi,eta1,eta2,h,principal_re,principal_im,closed_form,quadrature_re,quadrature_im\n";
    io::json rows = io::json::array();
    for (double xi : cfg.symbol_xi) {
        const cplx a0 = sc.principal(z, xi, cfg.symbol_eta);
        const cplx ah = sc.symbol_quadrature(z, xi, cfg.symbol_eta, h);
        double cf = sc.gaussian_closed_form(z, xi, cfg.symbol_eta);
        if (cfg.normal_op.variant == WeightVariant::scattering) cf *= g.x(z) * g.x(z);
        csv << io::fmt(xi) << ',' << io::fmt(cfg.symbol_eta[0]) << ',' << io::fmt(cfg.symbol_eta[1]) << ','
            << io::fmt(h) << ',' << io::fmt(a0.real()) << ',' << io::fmt(a0.imag()) << ',' << io::fmt(cf) << ','
            << io::fmt(ah.real()) << ',' << io::fmt(ah.imag()) << '\n';
        rows.push_back({{"xi", xi}, {"principal_abs", std::abs(a0)}, {"closed_form", cf}, {"quadrature_abs", std::abs(ah)}});
    }
    io::write_text(dir / "symbol.csv", csv.str());
    Outcome o;
    o.files = {"symbol.csv"};
    o.summary = {{"z", vec_json(z)}, {"variant", to_string(cfg.normal_op.variant)}, {"rows", rows}};
    return o;
}

inline Outcome run_ellipticity(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    const Geometry g(cfg.geometry);
    const NormalOperator op(g, cfg.normal_op, certificate_for(g, cfg));
    const SymbolCalculator sc(op, cfg.symbol);
    const auto cert = sc.certify_ellipticity(cfg.ellipticity);
    std::ostringstream csv;
    csv << "zx,zy,zz,xi,eta1,eta2,a0_re,a0_im\n";
    for (const auto& s : cert.samples)
        csv << io::fmt(s.z[0]) << ',' << io::fmt(s.z[1]) << ',' << io::fmt(s.z[2]) << ',' << io::fmt(s.xi) << ','
            << io::fmt(s.eta[0]) << ',' << io::fmt(s.eta[1]) << ',' << io::fmt(s.value.real()) << ','
            << io::fmt(s.value.imag()) << '\n';
    io::write_text(dir / "ellipticity.csv", csv.str());
    Outcome o;
    o.summary = {{"c_min", cert.c_min},
                 {"a0_ref", cert.a0_ref},
                 {"threshold", cert.threshold},
                 {"pass", cert.pass},
                 {"n_samples", cert.n_samples},
                 {"argmin", {{"z", vec_json(cert.argmin.z)},
                             {"xi", cert.argmin.xi},
                             {"eta", {cert.argmin.eta[0], cert.argmin.eta[1]}}}}};
    io::write_json(dir / "ellipticity.json", o.summary);
    o.files = {"ellipticity.csv", "ellipticity.json"};
    if (!cert.pass) o.code = kExitNumeric;
    return o;
}

inline Outcome run_reconstruct(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    const Geometry g(cfg.geometry);
    // read input first so a missing file fails before any heavy work
    std::optional<Sinogram> input;
    if (!cfg.sinogram.empty()) input = read_sinogram(cfg.sinogram);
    const NormalOperator op(g, cfg.normal_op, certificate_for(g, cfg));
    const GridSpec grid = grid_covering_Mprime(g, cfg.grid_n);
    std::optional<GridFunction> truth;
    if (!input) {
        cfg.phantom.check_support(g);
        input = phantom_sinogram(op, cfg.phantom, grid);
        truth = cfg.phantom.sample(grid, g);
    }
    const auto rec = reconstruct(op, *input, grid, cfg.solver, truth ? &*truth : nullptr);
    write_grid_function(dir / "f_hat.fxgf", rec.f);
    write_grid_function(dir / "g_hat.fxgf", rec.g);
    io::write_text(dir / "report.csv", SolveReport::csv_header() + "\n" + rec.report.csv_row() + "\n");
    io::write_json(dir / "report.json", rec.report.to_json());
    Outcome o;
    o.files = {"f_hat.fxgf", "f_hat.fxgf.json", "g_hat.fxgf", "g_hat.fxgf.json", "report.csv", "report.json"};
    o.summary = rec.report.to_json();
    return o;
}

inline Outcome run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    const Geometry g(cfg.geometry);
    cfg.phantom.check_support(g);
    const auto rows = h_sweep(g, cfg.normal_op, certificate_for(g, cfg), cfg.phantom, cfg.sweep_h, cfg.grid_n,
                              cfg.solver, cfg.sweep_sigma);
    std::string csv = SolveReport::csv_header() + "\n";
    io::json js = io::json::array();
    for (const auto& r : rows) {
        csv += r.csv_row() + "\n";
        js.push_back(r.to_json());
    }
    io::write_text(dir / "sweep.csv", csv);
    io::write_json(dir / "sweep.json", js);
    Outcome o;
    o.files = {"sweep.csv", "sweep.json"};
    o.summary = {{"rows", js}};
    return o;
}

// ---------------------------------------------------------------------------
// selftest: quick checks against closed forms. Output carries no timings, so
// repeated runs are byte-identical.

struct SelfCheck {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline std::vector<SelfCheck> selftest_checks() {
    std::vector<SelfCheck> out;
    auto add = [&](std::string name, double value, double tol) {
        out.push_back({std::move(name), value, tol, std::isfinite(value) && value <= tol});
    };
    const Geometry g{GeometrySpec{}};

    {   // straight lines in the Euclidean metric
        const Vec3 z(2.1, -0.2, 0.3), v = Vec3(0.3, 0.8, 0.1).normalized();
        const auto tr = g.trace_geodesic(z, v, 1e-2);
        double dev = 0.0;
        for (const auto& s : tr.samples) dev = std::max(dev, (s.z - (z + s.t * v)).norm());
        add("euclidean_geodesic_straight", dev, 1e-12);
    }
    {   // C0 = 2 for x = |z|^2 with unit-speed lines
        CertifyOptions co;
        const auto c = certify_convexity(g, co);
        add("certificate_C0", std::abs(c.C0 - 2.0), 1e-6);
    }
    {   // Gaussian line integral against the erf closed form
        const double w = 0.3;
        const Vec3 c(2.0, 0.1, 0.0);
        const Phantom ph = Phantom::gaussian(c, w);
        double worst = 0.0;
        for (int k = 0; k < 8; ++k) {
            const Vec3 z(2.0 + 0.1 * std::cos(k), 0.1 * std::sin(k), 0.05 * k - 0.2);
            const double lam = 0.5 * std::sin(3.0 * k), th = 0.7 * k;
            const double val = xray(g, ph, z, lam, th, 1e-3);
            const Vec3 v = g.compose_tangent(z, lam, g.leaf_direction(z, th));
            const auto tr = g.trace_geodesic(z, v, 1e-3);
            const double speed = v.norm();
            const Vec3 u = v / speed;
            // arclength endpoints of the segment inside M'
            const double s0 = (c - z).dot(u);
            const double d2 = (z + s0 * u - c).squaredNorm();
            const double a = tr.t_exit_minus * speed - s0, b = tr.t_exit_plus * speed - s0;
            const double exact = std::exp(-d2 / (w * w)) * w * std::sqrt(kPi) / 2.0 * (std::erf(b / w) - std::erf(a / w)) / speed;
            worst = std::max(worst, std::abs(val - exact) / std::abs(exact));
        }
        add("gaussian_line_integral", worst, 1e-5);
    }
    {   // tangent decomposition round trip
        double worst = 0.0;
        for (int k = 0; k < 16; ++k) {
            const Vec3 z(2.0 + 0.3 * std::cos(k), 0.3 * std::sin(2.0 * k), 0.2 * std::cos(3.0 * k));
            const Vec3 v(std::cos(k), std::sin(k), 0.5 * std::cos(2.0 * k));
            const auto d = g.decompose_tangent(z, v);
            worst = std::max(worst, (g.compose_tangent(z, d.lambda, d.omega) - v).norm());
        }
        add("tangent_roundtrip", worst, 1e-12);
    }
    const NormalOperator op(g, NormalOpConfig{}, certify_convexity(g, CertifyOptions{}));
    const SymbolCalculator sc(op);
    {   // principal symbol against the Gaussian closed form (Λ = 4 truncation)
        double worst = 0.0;
        for (double xi : {0.0, 1.0, 3.0})
            for (double e : {0.0, 2.0}) {
                const Eigen::Vector2d eta(e, 0.5 * e);
                const double cf = sc.gaussian_closed_form(g.spec().center_M, xi, eta);
                worst = std::max(worst, std::abs(std::abs(sc.principal_symbol(g.spec().center_M, xi, eta)) - cf) / cf);
            }
        add("principal_vs_closed_form", worst, 1e-3);
    }
    {   // GMRES on a manufactured nonsymmetric system
        const int n = 40;
        Eigen::MatrixXd A(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) A(i, j) = (i == j ? 4.0 : 0.0) + 0.3 * std::sin(1.0 + i + 2.0 * j);
        Eigen::VectorXd xs(n);
        for (int i = 0; i < n; ++i) xs[i] = std::cos(0.5 * i);
        const auto r = solve_normal(A, A * xs, SolveOptions{1e-12, 500, 50, 1e-3});
        add("gmres_manufactured", (r.x - xs).norm() / xs.norm(), 1e-9);
    }
    {   // L_h of the constant sinogram 1 is the λ̂-ω quadrature mass
        const Vec3 z(2.2, 0.1, -0.1);
        const double got = op.apply_L([](const Vec3&, double, double) { return 1.0; }, z);
        const auto& lr = op.lambda_rule();
        const auto& orule = op.omega_rule();
        const double scale = op.config().lambda_scale(g.x(z));
        double mass = 0.0;
        for (std::size_t k = 0; k < orule.nodes.size(); ++k) {
            const double a = g.alpha(z, 0.0, g.leaf_direction(z, orule.nodes[k]));
            for (std::size_t j = 0; j < lr.nodes.size(); ++j)
                mass += lr.weights[j] * orule.weights[k] * scale * op.config().cutoff(lr.nodes[j], a);
        }
        add("apply_L_constant", std::abs(got - mass) / mass, 1e-12);
    }
    {   // resolved config round trip
        ExperimentConfig c;
        apply_override(c, "normal_op.h=0.05");
        apply_override(c, "phantom.bumps=2, 0, 0, 0.3, 1; 2.2, 0.1, 0, 0.2, -0.5");
        const auto s = emit_config(c);
        add("config_roundtrip", emit_config(parse_config(s)) == s ? 0.0 : 1.0, 0.0);
    }
    return out;
}

inline Outcome run_selftest(const std::filesystem::path& dir, std::ostream& os) {
    const auto checks = selftest_checks();
    Outcome o;
    io::json arr = io::json::array();
    bool all = true;
    for (const auto& c : checks) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s %-28s %.3e (tol %.1e)", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value,
                      c.tolerance);
        os << buf << '\n';
        arr.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass}});
        all = all && c.pass;
    }
    o.summary = {{"checks", arr}, {"pass", all}};
    io::write_json(dir / "selftest.json", o.summary);
    o.files = {"selftest.json"};
    if (!all) o.code = kExitNumeric;
    return o;
}

} // namespace folxray::harness
