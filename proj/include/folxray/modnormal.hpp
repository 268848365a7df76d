// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "folxray/geometry.hpp"
#include "folxray/grid.hpp"
#include "folxray/io.hpp"
#include "folxray/quadrature.hpp"
#include "folxray/transform.hpp"

#include <Eigen/Dense>

#include <functional>
#include <type_traits>

namespace folxray {

enum class WeightVariant { global, scattering };

inline std::string to_string(WeightVariant v) { return v == WeightVariant::global ? "global" : "scattering"; }

/// χ̃(λ̂, α) = exp(-λ̂²/(2α)) ψ((λ̂ - shift)/Λ) with the plateau ψ. The Gaussian
/// factor is dropped when alpha_matched is false. A non-zero shift moves the
/// plateau off the origin (used to build cutoffs with χ(0) = 0).
struct CutoffSpec {
    double Lambda = 4.0;
    bool alpha_matched = true;
    double shift = 0.0;

    double operator()(double lh, double alpha) const {
        if (Lambda == 0.0) return 0.0;
        const double p = plateau((lh - shift) / Lambda);
        if (p == 0.0) return 0.0;
        return alpha_matched ? p * std::exp(-lh * lh / (2.0 * alpha)) : p;
    }
    double lo() const { return shift - 2.0 * Lambda; }
    double hi() const { return shift + 2.0 * Lambda; }
};

struct NormalOpConfig {
    double h = 0.1;
    CutoffSpec cutoff;
    WeightVariant variant = WeightVariant::global;
    int n_lambda = 16;
    int n_omega = 48;
    double t_step = 1e-2;

    void validate() const {
        if (!(h > 0.0) || h > 1.0) throw ConfigError("normal_op.h must lie in (0, 1]");
        if (!(cutoff.Lambda >= 0.0) || !std::isfinite(cutoff.Lambda)) throw ConfigError("cutoff Lambda must be >= 0");
        if (!std::isfinite(cutoff.shift)) throw ConfigError("cutoff shift must be finite");
        if (n_lambda < 6 || n_omega < 24) throw ConfigError("normal_op needs n_lambda >= 6 and n_omega >= 24");
        if (!(t_step > 0.0)) throw ConfigError("normal_op.t_step must be positive");
    }

    /// Φ(x): -x (global) or 1/x (scattering).
    double phi(double x) const { return variant == WeightVariant::global ? -x : 1.0 / x; }

    /// Factor s with λ = s λ̂: √h, or √h max(x, √h) in the scattering case.
    double lambda_scale(double x) const {
        const double sh = std::sqrt(h);
        return variant == WeightVariant::global ? sh : sh * std::max(x, sh);
    }
    bool scale_capped(double x) const { return variant == WeightVariant::scattering && x < std::sqrt(h); }
};

/// Ray-level functional v(z, λ, θ) for apply_L.
using RayFunctional = std::function<double(const Vec3&, double, double)>;

/// Matrix over the M-supported nodes of a grid (rows and columns share the
/// node list).
struct AssembledMatrix {
    GridSpec grid;
    std::vector<std::size_t> nodes; // grid indices, ascending
    Eigen::MatrixXd A;

    /// Grid vector -> node vector.
    Eigen::VectorXd restrict(const std::vector<double>& v) const {
        Eigen::VectorXd out(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) out[i] = v[nodes[i]];
        return out;
    }
    /// Node vector -> grid vector (zero elsewhere).
    std::vector<double> extend(const Eigen::VectorXd& u) const {
        std::vector<double> out(grid.size(), 0.0);
        for (std::size_t i = 0; i < nodes.size(); ++i) out[nodes[i]] = u[i];
        return out;
    }
};

inline constexpr int kMaxAssembleDim = 17;

/// Modified normal operator A_h = e^{-Φ/h} L_h I e^{Φ/h} and the localized
/// backprojection L_h, discretised by tensor quadrature over (λ̂, ω, t).
class NormalOperator {
public:
    NormalOperator(const Geometry& g, NormalOpConfig cfg, ConvexityCertificate cert)
        : g_(g), cfg_(cfg), cert_(cert) {
        cfg_.validate();
        if (cfg_.variant == WeightVariant::scattering && !(g_.x_range_Mprime().first > 0.0))
            throw PreconditionError("scattering weight needs x > 0 on M'");
        lam_ = gauss_legendre(cfg_.n_lambda, cfg_.cutoff.lo(), cfg_.cutoff.hi());
        om_ = circle_rule(cfg_.n_omega);
        xmin_ = g_.x_range_Mprime().first;
    }

    const Geometry& geometry() const { return g_; }
    const NormalOpConfig& config() const { return cfg_; }
    const ConvexityCertificate& certificate() const { return cert_; }
    const QuadratureRule& lambda_rule() const { return lam_; }
    const QuadratureRule& omega_rule() const { return om_; }

    /// Per-base-point quadrature data: directions, α(z,0,ω), λ scale and the
    /// (λ̂, ω) weights including χ̃ and the λ scale.
    struct Bundle {
        Vec3 z;
        double x = 0.0;
        double scale = 0.0;
        std::vector<Vec3> omega;
        std::vector<double> alpha;
        std::vector<double> weight; // [j * n_omega + k]
    };

    Bundle bundle(const Vec3& z) const {
        g_.require_in_Mprime(z);
        Bundle b;
        b.z = z;
        b.x = g_.x(z);
        b.scale = cfg_.lambda_scale(b.x);
        const std::size_t nl = lam_.size(), nw = om_.size();
        b.omega.resize(nw);
        b.alpha.resize(nw);
        for (std::size_t k = 0; k < nw; ++k) {
            b.omega[k] = g_.leaf_direction(z, om_.nodes[k]);
            b.alpha[k] = g_.alpha(z, 0.0, b.omega[k]);
        }
        b.weight.assign(nl * nw, 0.0);
        for (std::size_t j = 0; j < nl; ++j)
            for (std::size_t k = 0; k < nw; ++k)
                b.weight[j * nw + k] = lam_.weights[j] * om_.weights[k] * b.scale * cfg_.cutoff(lam_.nodes[j], b.alpha[k]);
        return b;
    }

    // --- L_h ---------------------------------------------------------------

    double apply_L(const RayFunctional& v, const Vec3& z) const {
        const Bundle b = bundle(z);
        double acc = 0.0;
        for (std::size_t j = 0; j < lam_.size(); ++j)
            for (std::size_t k = 0; k < om_.size(); ++k) {
                const double w = b.weight[j * om_.size() + k];
                if (w == 0.0) continue;
                acc += w * v(z, b.scale * lam_.nodes[j], om_.nodes[k]);
            }
        return acc;
    }

    double apply_L(const Sinogram& d, const BaseLookup& lookup, const Vec3& z) const {
        const std::size_t i = lookup.find(z);
        return apply_L([&](const Vec3&, double l, double th) { return d.interpolate(i, l, th); }, z);
    }

    // --- A_h ---------------------------------------------------------------

    /// Walks every quadrature sample of A_h at z: fn(p, w) with w the full
    /// weight (λ̂, ω, t weights, χ̃, λ scale and damping). The damping factor
    /// is checked against the Gaussian bound at every sample. With
    /// damped = false the undamped L_h I samples are produced instead (full
    /// traces, no damping check; the certified λ range still applies).
    template <class Fn>
    void for_each_sample(const Vec3& z, Fn&& fn, bool damped = true) const {
        const Bundle b = bundle(z);
        const double phi0 = cfg_.phi(b.x);
        const double h = cfg_.h;
        const std::size_t nw = om_.size();
        GeodesicTrace tr;
        // Past the vertex of x(γ) the damping only decreases; stop once it
        // drops below e^-40.
        auto stop = [&](double t, const Vec3& p, const Vec3& v) {
            if (!damped) return false;
            const double d1 = g_.grad_x(p).dot(v);
            if (t * d1 <= 0.0) return false;
            return (cfg_.phi(g_.x(p)) - phi0) / h < -40.0;
        };
        const double t_limit = 2.0 * std::max(cert_.T_bound, 1.0);
        for (std::size_t j = 0; j < lam_.size(); ++j) {
            const double lambda = b.scale * lam_.nodes[j];
            for (std::size_t k = 0; k < nw; ++k) {
                const double w = b.weight[j * nw + k];
                if (w == 0.0) continue;
                if (std::abs(lambda) >= cert_.lambda0) {
                    std::ostringstream os;
                    os << "lambda = " << lambda << " at z = (" << z.transpose()
                       << ") is outside the certified range |lambda| < " << cert_.lambda0;
                    throw DampingViolationError(os.str());
                }
                const Vec3 v = g_.compose_tangent(z, lambda, b.omega[k]);
                g_.trace_into(tr, z, v, cfg_.t_step, t_limit, stop);
                tr.for_each_node([&](double t, const Vec3& p, const Vec3&, double wt) {
                    if (!damped) {
                        fn(p, w * wt);
                        return;
                    }
                    const double e = (cfg_.phi(g_.x(p)) - phi0) / h;
                    const double bound = damping_bound_exponent(b.x, lambda, t);
                    if (e > bound + std::log(1.01)) {
                        std::ostringstream os;
                        os << "damping factor exp(" << e << ") exceeds the Gaussian bound exp(" << bound
                           << ") at z = (" << z.transpose() << "), lambda = " << lambda << ", omega node " << k
                           << ", t = " << t;
                        throw DampingViolationError(os.str());
                    }
                    fn(p, w * wt * std::exp(e));
                });
            }
        }
    }

    /// Exponent of the Gaussian damping bound at (x, λ, t).
    double damping_bound_exponent(double x0, double lambda, double t) const {
        return damping_bound_exponent(x0, lambda, t, cfg_.h);
    }
    double damping_bound_exponent(double x0, double lambda, double t, double h) const {
        const double q = x0 + lambda * t + 0.5 * cert_.C_quad * t * t;
        if (cfg_.variant == WeightVariant::global) return -(q - x0) / h;
        return (1.0 / std::max(xmin_, q) - 1.0 / x0) / h;
    }

    /// A_h f at a single point; f may be real or complex valued.
    template <class Field>
    auto apply_A_at(const Field& f, const Vec3& z) const {
        using T = std::decay_t<decltype(f(z))>;
        T acc{};
        for_each_sample(z, [&](const Vec3& p, double w) { acc += w * f(p); });
        return acc;
    }

    /// A_h f on every node of the grid inside M' (zero elsewhere).
    template <class Field>
    GridFunction apply_A(const Field& f, const GridSpec& grid) const {
        GridFunction out(grid, g_);
        parallel_for(grid.size(), [&](std::size_t i) {
            const Vec3 z = grid.node(i);
            if (g_.in_Mprime(z)) out.values[i] = apply_A_at(f, z);
        });
        return out;
    }

    // --- matrices ----------------------------------------------------------

    /// Damped A_h over the M-supported nodes: every sample deposits its
    /// weight onto its trilinear stencil.
    AssembledMatrix assemble_A(const GridSpec& grid) const { return assemble(grid, true); }

    /// Undamped L_h I over the M-supported nodes (same deposition).
    AssembledMatrix assemble_LI(const GridSpec& grid) const { return assemble(grid, false); }

    /// b(z) = e^{-Φ(x(z))/h} L_h d(z) on the grid nodes inside M'.
    GridFunction conjugated_rhs(const Sinogram& d, const GridSpec& grid) const {
        require_same_geometry(d, g_);
        const BaseLookup lookup(d);
        GridFunction out(grid, g_);
        parallel_for(grid.size(), [&](std::size_t i) {
            const Vec3 z = grid.node(i);
            if (!g_.in_Mprime(z)) return;
            out.values[i] = std::exp(-cfg_.phi(g_.x(z)) / cfg_.h) * apply_L(d, lookup, z);
        });
        for (double v : out.values)
            if (!std::isfinite(v)) throw IntegrationError("conjugated right-hand side overflowed; increase h");
        return out;
    }

    /// Sinogram layout matching the (λ̂, ω) quadrature at the given base points.
    SinogramGrid sinogram_grid(const std::vector<Vec3>& base_points) const {
        SinogramGrid sg;
        sg.base_points = base_points;
        sg.lambda_nodes = lam_.nodes;
        sg.omega_nodes = om_.nodes;
        for (const auto& z : base_points) sg.lambda_scale.push_back(cfg_.lambda_scale(g_.x(z)));
        return sg;
    }

private:
    AssembledMatrix assemble(const GridSpec& grid, bool damped) const {
        for (int a = 0; a < 3; ++a)
            if (grid.dims[a] > kMaxAssembleDim)
                throw PreconditionError("assembly refuses grids larger than 17^3");
        AssembledMatrix m;
        m.grid = grid;
        std::vector<std::ptrdiff_t> col(grid.size(), -1);
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (g_.in_M(grid.node(i))) {
                col[i] = static_cast<std::ptrdiff_t>(m.nodes.size());
                m.nodes.push_back(i);
            }
        const std::size_t n = m.nodes.size();
        m.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        parallel_for(n, [&](std::size_t r) {
            const Vec3 z = grid.node(m.nodes[r]);
            for_each_sample(
                z,
                [&](const Vec3& p, double w) {
                    const auto st = trilinear_stencil(grid, p);
                    for (int c = 0; c < st.count; ++c) {
                        const auto cc = col[st.node[c]];
                        if (cc >= 0) m.A(static_cast<Eigen::Index>(r), cc) += w * st.weight[c];
                    }
                },
                damped);
        });
        return m;
    }

    Geometry g_;
    NormalOpConfig cfg_;
    ConvexityCertificate cert_;
    QuadratureRule lam_;
    QuadratureRule om_;
    double xmin_ = 0.0;
};

// ---------------------------------------------------------------------------
// FXMT triplet file: (u64 row, u64 col, f64 value) records, row-major order,
// zeros skipped; JSON sidecar carries the grid and node list.

inline void write_matrix(const std::filesystem::path& path, const AssembledMatrix& m, const io::json& extra = {}) {
    auto os = io::open_out(path);
    std::uint64_t count = 0;
    for (Eigen::Index r = 0; r < m.A.rows(); ++r)
        for (Eigen::Index c = 0; c < m.A.cols(); ++c) {
            const double v = m.A(r, c);
            if (v == 0.0) continue;
            const std::uint64_t rr = static_cast<std::uint64_t>(r), cc = static_cast<std::uint64_t>(c);
            os.write(reinterpret_cast<const char*>(&rr), 8);
            os.write(reinterpret_cast<const char*>(&cc), 8);
            os.write(reinterpret_cast<const char*>(&v), 8);
            ++count;
        }
    if (!os) throw IoError("write failed for '" + path.string() + "'");
    os.close();
    io::json meta{{"format", "FXMT"},
                  {"record", "u64 row, u64 col, f64 value"},
                  {"rows", m.A.rows()},
                  {"cols", m.A.cols()},
                  {"nonzeros", count},
                  {"grid_origin", {m.grid.origin[0], m.grid.origin[1], m.grid.origin[2]}},
                  {"grid_spacing", m.grid.spacing},
                  {"grid_dims", m.grid.dims},
                  {"nodes", m.nodes}};
    if (extra.is_object())
        for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
    auto side = path;
    side += ".json";
    io::write_json(side, meta);
}

inline AssembledMatrix read_matrix(const std::filesystem::path& path) {
    auto side = path;
    side += ".json";
    const auto meta = io::read_json(side);
    AssembledMatrix m;
    try {
        const auto o = meta.at("grid_origin");
        m.grid.origin = Vec3(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
        m.grid.spacing = meta.at("grid_spacing").get<double>();
        m.grid.dims = meta.at("grid_dims").get<std::array<int, 3>>();
        m.nodes = meta.at("nodes").get<std::vector<std::size_t>>();
        m.A = Eigen::MatrixXd::Zero(meta.at("rows").get<Eigen::Index>(), meta.at("cols").get<Eigen::Index>());
    } catch (const io::json::exception& e) {
        throw IoError("bad matrix metadata in '" + side.string() + "': " + e.what());
    }
    auto is = io::open_in(path);
    for (;;) {
        std::uint64_t r = 0, c = 0;
        double v = 0.0;
        if (!is.read(reinterpret_cast<char*>(&r), 8)) break;
        if (!is.read(reinterpret_cast<char*>(&c), 8) || !is.read(reinterpret_cast<char*>(&v), 8))
            throw IoError("truncated triplet in '" + path.string() + "'");
        if (r >= static_cast<std::uint64_t>(m.A.rows()) || c >= static_cast<std::uint64_t>(m.A.cols()))
            throw IoError("triplet index out of range in '" + path.string() + "'");
        m.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
    return m;
}

} // namespace folxray
