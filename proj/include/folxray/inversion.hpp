// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "folxray/modnormal.hpp"

#include <Eigen/SVD>

#include <optional>

namespace folxray {

struct SolveOptions {
    double tol = 1e-8;
    int max_iter = 500;
    int restart = 50;
    double stagnation = 1e-3; // minimum relative residual reduction per restart cycle
};

struct GmresResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double residual = 0.0; // ‖b - A x‖ / ‖b‖
};

/// Restarted GMRES (Arnoldi with modified Gram-Schmidt, Givens rotations).
/// Throws ConvergenceError on stagnation or when max_iter is exhausted.
template <class Apply>
GmresResult gmres(Apply&& A, const Eigen::VectorXd& b, const SolveOptions& opt) {
    if (!(opt.tol > 0.0) || opt.max_iter < 1 || opt.restart < 1) throw ArgumentError("bad solver options");
    const Eigen::Index n = b.size();
    GmresResult res;
    res.x = Eigen::VectorXd::Zero(n);
    const double bn = b.norm();
    if (bn == 0.0) return res;
    if (!std::isfinite(bn)) throw ArgumentError("right-hand side is not finite");

    Eigen::VectorXd r = b;
    double rn = bn;
    const int m = opt.restart;
    Eigen::MatrixXd V(n, m + 1);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
    Eigen::VectorXd cs(m), sn(m), s(m + 1);
    while (true) {
        const double cycle_start = rn;
        V.col(0) = r / rn;
        s.setZero();
        s[0] = rn;
        H.setZero();
        int k = 0;
        for (; k < m && res.iterations < opt.max_iter; ++k) {
            ++res.iterations;
            Eigen::VectorXd w = A(V.col(k));
            for (int i = 0; i <= k; ++i) {
                H(i, k) = V.col(i).dot(w);
                w -= H(i, k) * V.col(i);
            }
            H(k + 1, k) = w.norm();
            if (H(k + 1, k) > 0.0) V.col(k + 1) = w / H(k + 1, k);
            for (int i = 0; i < k; ++i) {
                const double t = cs[i] * H(i, k) + sn[i] * H(i + 1, k);
                H(i + 1, k) = -sn[i] * H(i, k) + cs[i] * H(i + 1, k);
                H(i, k) = t;
            }
            const double d = std::hypot(H(k, k), H(k + 1, k));
            cs[k] = d == 0.0 ? 1.0 : H(k, k) / d;
            sn[k] = d == 0.0 ? 0.0 : H(k + 1, k) / d;
            H(k, k) = d;
            H(k + 1, k) = 0.0;
            s[k + 1] = -sn[k] * s[k];
            s[k] = cs[k] * s[k];
            if (std::abs(s[k + 1]) <= opt.tol * bn || H(k, k) == 0.0) {
                ++k;
                break;
            }
        }
        // update with the k Krylov directions (skip a trailing singular column)
        int kk = k;
        while (kk > 0 && H(kk - 1, kk - 1) == 0.0) --kk;
        if (kk > 0) {
            Eigen::VectorXd y = H.topLeftCorner(kk, kk).triangularView<Eigen::Upper>().solve(s.head(kk));
            res.x += V.leftCols(kk) * y;
        }
        r = b - A(res.x);
        rn = r.norm();
        res.residual = rn / bn;
        if (res.residual <= opt.tol) return res;
        if (rn > (1.0 - opt.stagnation) * cycle_start) {
            std::ostringstream os;
            os << "solver stagnated: relative residual " << res.residual << " after " << res.iterations
               << " iterations (restart cycle reduced it by less than " << opt.stagnation << ")";
            throw ConvergenceError(os.str());
        }
        if (res.iterations >= opt.max_iter) {
            std::ostringstream os;
            os << "solver reached max_iter = " << opt.max_iter << " with relative residual " << res.residual;
            throw ConvergenceError(os.str());
        }
    }
}

inline GmresResult solve_normal(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const SolveOptions& opt) {
    if (A.rows() != A.cols() || A.rows() != b.size()) throw ArgumentError("solve_normal needs a square system");
    return gmres([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return A * v; }, b, opt);
}

// ---------------------------------------------------------------------------

struct SolveReport {
    std::string variant = "global";
    double h = 0.0;
    std::array<int, 3> dims{0, 0, 0};
    std::size_t unknowns = 0;
    int iterations = 0;
    double residual = 0.0;
    std::optional<double> rel_l2_error;
    std::optional<double> rel_sup_error;
    double stability_ratio = 0.0; // ‖f‖₂ / ‖d‖₂
    std::optional<double> sigma_min;
    std::optional<double> sigma_ratio;
    std::string status = "ok";
    std::string message;

    static std::string csv_header() {
        return "variant,h,nx,ny,nz,unknowns,iterations,residual,rel_l2_error,rel_sup_error,stability_ratio,"
               "sigma_min,sigma_ratio,status";
    }
    std::string csv_row() const {
        auto opt = [](const std::optional<double>& v) { return v ? io::fmt(*v) : std::string(); };
        std::ostringstream os;
        os << variant << ',' << io::fmt(h) << ',' << dims[0] << ',' << dims[1] << ',' << dims[2] << ',' << unknowns
           << ',' << iterations << ',' << io::fmt(residual) << ',' << opt(rel_l2_error) << ',' << opt(rel_sup_error)
           << ',' << io::fmt(stability_ratio) << ',' << opt(sigma_min) << ',' << opt(sigma_ratio) << ',' << status;
        return os.str();
    }
    io::json to_json() const {
        io::json j{{"variant", variant},       {"h", h},
                   {"dims", dims},             {"unknowns", unknowns},
                   {"iterations", iterations}, {"residual", residual},
                   {"stability_ratio", stability_ratio}, {"status", status}};
        auto put = [&](const char* k, const std::optional<double>& v) { j[k] = v ? io::json(*v) : io::json(nullptr); };
        put("rel_l2_error", rel_l2_error);
        put("rel_sup_error", rel_sup_error);
        put("sigma_min", sigma_min);
        put("sigma_ratio", sigma_ratio);
        if (!message.empty()) j["message"] = message;
        return j;
    }
};

struct Reconstruction {
    GridFunction f;   // reconstructed f̂, zero outside M
    GridFunction g;   // conjugated unknown e^{-Φ/h} f̂
    SolveReport report;
};

inline void fill_errors(SolveReport& rep, const GridFunction& f, const GridFunction& truth) {
    double num = 0.0, den = 0.0, sup_num = 0.0, sup_den = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        if (!truth.support_mask[i]) continue;
        const double d = f.values[i] - truth.values[i];
        num += d * d;
        den += truth.values[i] * truth.values[i];
        sup_num = std::max(sup_num, std::abs(d));
        sup_den = std::max(sup_den, std::abs(truth.values[i]));
    }
    rep.rel_l2_error = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    rep.rel_sup_error = sup_den > 0.0 ? sup_num / sup_den : sup_num;
}

/// Reconstructs f from X-ray data d on the M-supported nodes of `grid`.
///
/// A_h g = e^{-Φ/h} L_h d with f = e^{Φ/h} g is solved in its equilibrated
/// form L_h I f = L_h d: multiplying row z by e^{Φ(x(z))/h} and substituting
/// g = e^{-Φ/h} f turns the damped system into the undamped one, whose
/// discretisation deposits the smooth f rather than the exponentially
/// varying g on the lattice.
inline Reconstruction reconstruct(const NormalOperator& op, const Sinogram& d, const GridSpec& grid,
                                  const SolveOptions& opt, const GridFunction* truth = nullptr) {
    const auto& g = op.geometry();
    const auto& cfg = op.config();
    require_same_geometry(d, g);
    d.check_consistent();
    const AssembledMatrix M = op.assemble_LI(grid);
    const BaseLookup lookup(d);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(M.nodes.size()));
    parallel_for(M.nodes.size(), [&](std::size_t i) {
        rhs[static_cast<Eigen::Index>(i)] = op.apply_L(d, lookup, grid.node(M.nodes[i]));
    });
    const GmresResult sol = solve_normal(M.A, rhs, opt);

    Reconstruction out;
    out.f = GridFunction(grid, g);
    out.f.values = M.extend(sol.x);
    out.f.enforce_support();
    out.g = out.f;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (out.g.values[i] != 0.0) out.g.values[i] *= std::exp(-cfg.phi(g.x(grid.node(i))) / cfg.h);

    auto& rep = out.report;
    rep.variant = to_string(cfg.variant);
    rep.h = cfg.h;
    rep.dims = grid.dims;
    rep.unknowns = M.nodes.size();
    rep.iterations = sol.iterations;
    rep.residual = sol.residual;
    double dn = 0.0;
    for (double v : d.data) dn += v * v;
    dn = std::sqrt(dn);
    rep.stability_ratio = dn > 0.0 ? out.f.l2() / dn : 0.0;
    if (truth) fill_errors(rep, out.f, *truth);
    return out;
}

struct InjectivityReport {
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double ratio = 0.0;
    std::size_t size = 0;
};

inline InjectivityReport injectivity_probe(const Eigen::MatrixXd& A) {
    InjectivityReport r;
    r.size = static_cast<std::size_t>(A.cols());
    if (A.size() == 0) return r;
    if (A.rows() > 13 * 13 * 13 || A.cols() > 13 * 13 * 13)
        throw PreconditionError("injectivity_probe is limited to grids of at most 13^3 nodes");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(A);
    const auto& s = svd.singularValues();
    r.sigma_max = s[0];
    r.sigma_min = s[s.size() - 1];
    r.ratio = r.sigma_max > 0.0 ? r.sigma_min / r.sigma_max : 0.0;
    return r;
}

/// Forward data for reconstruction: analytic phantom, base points at the
/// M-supported grid nodes, (λ, ω) nodes matching the operator quadrature,
/// ray step min(grid spacing, 1e-2).
inline Sinogram phantom_sinogram(const NormalOperator& op, const Phantom& ph, const GridSpec& grid) {
    const auto& g = op.geometry();
    std::vector<Vec3> bp;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (g.in_M(grid.node(i))) bp.push_back(grid.node(i));
    return forward_sinogram(g, ph, op.sinogram_grid(bp), std::min(grid.spacing, 1e-2));
}

/// Reconstruction of `ph` at each h in the list; failures are recorded in
/// the row and the sweep continues.
inline std::vector<SolveReport> h_sweep(const Geometry& g, const NormalOpConfig& base, const ConvexityCertificate& cert,
                                        const Phantom& ph, const std::vector<double>& hs, int grid_n,
                                        const SolveOptions& opt, bool with_sigma = false) {
    if (hs.empty()) throw ArgumentError("h_sweep needs a non-empty h list");
    if (hs.size() < 3) throw ArgumentError("h_sweep needs at least 3 h values");
    const GridSpec grid = grid_covering_Mprime(g, grid_n);
    const GridFunction truth = ph.sample(grid, g);
    std::vector<SolveReport> rows;
    for (double h : hs) {
        SolveReport rep;
        rep.variant = to_string(base.variant);
        rep.h = h;
        rep.dims = grid.dims;
        try {
            NormalOpConfig cfg = base;
            cfg.h = h;
            const NormalOperator op(g, cfg, cert);
            const Sinogram d = phantom_sinogram(op, ph, grid);
            rep = reconstruct(op, d, grid, opt, &truth).report;
            if (with_sigma) {
                const auto inj = injectivity_probe(op.assemble_A(grid).A);
                rep.sigma_min = inj.sigma_min;
                rep.sigma_ratio = inj.ratio;
            }
        } catch (const Error& e) {
            rep.status = "failed";
            rep.message = e.what();
        }
        rows.push_back(rep);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// FXGF grid function container: 64-byte header
//   0 magic "FXGF"   4 version u32   8/12/16 dims i32
//  24 origin f64[3]  48 spacing f64  56 reserved
// then values f64[n], support mask u8[n].

inline constexpr std::uint32_t kGridVersion = 1;

inline void write_grid_function(const std::filesystem::path& path, const GridFunction& f) {
    if (f.values.size() != f.grid.size() || f.support_mask.size() != f.grid.size())
        throw ArgumentError("grid function size mismatch");
    io::Header64 hd;
    hd.put_magic("FXGF");
    hd.put<std::uint32_t>(4, kGridVersion);
    for (int a = 0; a < 3; ++a) hd.put<std::int32_t>(8 + 4 * a, f.grid.dims[a]);
    for (int a = 0; a < 3; ++a) hd.put<double>(24 + 8 * a, f.grid.origin[a]);
    hd.put<double>(48, f.grid.spacing);
    auto os = io::open_out(path);
    os.write(hd.bytes().data(), 64);
    io::write_f64(os, f.values);
    os.write(reinterpret_cast<const char*>(f.support_mask.data()), static_cast<std::streamsize>(f.support_mask.size()));
    if (!os) throw IoError("write failed for '" + path.string() + "'");
    os.close();
    auto side = path;
    side += ".json";
    io::write_json(side, io::json{{"magic", "FXGF"},
                                  {"version", kGridVersion},
                                  {"dims", f.grid.dims},
                                  {"origin", {f.grid.origin[0], f.grid.origin[1], f.grid.origin[2]}},
                                  {"spacing", f.grid.spacing},
                                  {"layout", "values f64[n], support_mask u8[n], index (i*ny + j)*nz + k"}});
}

inline GridFunction read_grid_function(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    std::array<char, 64> raw{};
    is.read(raw.data(), 64);
    if (is.gcount() != 64) throw IoError("truncated grid header in '" + path.string() + "'");
    const io::Header64 hd(raw);
    if (!hd.has_magic("FXGF")) throw IoError("'" + path.string() + "' is not an FXGF grid function");
    if (hd.get<std::uint32_t>(4) != kGridVersion) throw IoError("unsupported grid version");
    GridFunction f;
    for (int a = 0; a < 3; ++a) {
        f.grid.dims[a] = hd.get<std::int32_t>(8 + 4 * a);
        if (f.grid.dims[a] < 0) throw IoError("corrupt grid dims");
        f.grid.origin[a] = hd.get<double>(24 + 8 * a);
    }
    f.grid.spacing = hd.get<double>(48);
    f.values = io::read_f64(is, f.grid.size(), "grid values");
    f.support_mask.resize(f.grid.size());
    is.read(reinterpret_cast<char*>(f.support_mask.data()), static_cast<std::streamsize>(f.grid.size()));
    if (static_cast<std::size_t>(is.gcount()) != f.grid.size()) throw IoError("truncated support mask");
    return f;
}

} // namespace folxray
