// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "folxray/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace folxray {

enum class MetricKind { euclidean, conformal };
enum class FoliationKind { radial, planar };

inline std::string to_string(MetricKind k) { return k == MetricKind::euclidean ? "euclidean" : "conformal"; }
inline std::string to_string(FoliationKind k) { return k == FoliationKind::radial ? "radial" : "planar"; }

/// Declarative description of the ambient metric, the domains M ⊂ M' (balls)
/// and the foliation function.
///
/// Metric families:
///   euclidean  g = I
///   conformal  g = (1 + eps q(z)) I,  q(z) = exp(-|z - metric_center|^2)
/// Foliation families (x = x_tilde + layer_offset):
///   radial     x_tilde = |z - foliation_center|^2
///   planar     x_tilde = foliation_normal . z      (flat leaves; not convex)
struct GeometrySpec {
    MetricKind metric = MetricKind::euclidean;
    double metric_epsilon = 0.0;
    std::optional<Vec3> metric_center; // defaults to center_M

    Vec3 center_M{2.0, 0.0, 0.0};
    double radius_M = 1.0;
    double radius_Mprime = 1.1;

    FoliationKind foliation = FoliationKind::radial;
    Vec3 foliation_center{0.0, 0.0, 0.0};
    Vec3 foliation_normal{1.0, 0.0, 0.0};
    double layer_offset = 0.0;

    std::string canonical() const {
        std::ostringstream os;
        os.precision(17);
        const Vec3 mc = metric_center.value_or(center_M);
        os << "metric=" << to_string(metric) << ";eps=" << metric_epsilon << ";mc=" << mc.transpose()
           << ";cM=" << center_M.transpose() << ";RM=" << radius_M << ";RMp=" << radius_Mprime
           << ";fol=" << to_string(foliation) << ";fc=" << foliation_center.transpose()
           << ";fn=" << foliation_normal.transpose() << ";c=" << layer_offset;
        return os.str();
    }

    std::uint64_t hash() const {
        Fnv1a h;
        h.add(canonical());
        return h.value();
    }
};

/// Tangent vector split v = lambda * T(z) + omega, with lambda = dx_z(v), T the
/// metric-normalised transversal (dx(T) = 1, T g-orthogonal to the leaf) and
/// omega in ker dx_z.
struct TangentDecomposition {
    double lambda = 0.0;
    Vec3 omega = Vec3::Zero();
};

struct TraceSample {
    double t;
    Vec3 z;
    Vec3 v;
};

/// A sampled geodesic. Samples are ordered by increasing t and bracket the
/// segment inside M': when a direction exits, the first sample outside M' is
/// the outermost sample on that side.
struct GeodesicTrace {
    std::vector<TraceSample> samples;
    bool exited_forward = false;
    bool exited_backward = false;
    double t_exit_plus = 0.0;
    double t_exit_minus = 0.0;
    Vec3 z_exit_plus = Vec3::Zero();
    Vec3 z_exit_minus = Vec3::Zero();
    Vec3 v_exit_plus = Vec3::Zero();
    Vec3 v_exit_minus = Vec3::Zero();

    std::size_t first_inside() const { return exited_backward ? 1 : 0; }
    std::size_t end_inside() const { return exited_forward ? samples.size() - 1 : samples.size(); }

    /// Composite trapezoid over the segment inside M': the inside samples plus
    /// the interpolated exit points. fn(t, z, v, weight).
    template <class Fn>
    void for_each_node(Fn&& fn) const {
        const std::size_t lo = first_inside(), hi = end_inside();
        if (lo >= hi) return;
        double prev_t = exited_backward ? t_exit_minus : samples[lo].t;
        if (exited_backward) fn(t_exit_minus, z_exit_minus, v_exit_minus, 0.5 * (samples[lo].t - t_exit_minus));
        for (std::size_t i = lo; i < hi; ++i) {
            const double next_t = (i + 1 < hi) ? samples[i + 1].t : (exited_forward ? t_exit_plus : samples[i].t);
            fn(samples[i].t, samples[i].z, samples[i].v, 0.5 * (next_t - prev_t));
            prev_t = samples[i].t;
        }
        if (exited_forward) fn(t_exit_plus, z_exit_plus, v_exit_plus, 0.5 * (t_exit_plus - samples[hi - 1].t));
    }
};

/// Immutable, validated geometry.
class Geometry {
public:
    explicit Geometry(GeometrySpec spec = {}) : spec_(std::move(spec)) {
        metric_center_ = spec_.metric_center.value_or(spec_.center_M);
        validate();
    }

    const GeometrySpec& spec() const { return spec_; }
    std::uint64_t hash() const { return spec_.hash(); }

    // --- domains --------------------------------------------------------
    bool in_M(const Vec3& z) const { return (z - spec_.center_M).norm() <= spec_.radius_M * (1.0 + 1e-12); }
    bool in_Mprime(const Vec3& z) const {
        return (z - spec_.center_M).norm() <= spec_.radius_Mprime * (1.0 + 1e-12);
    }
    /// Positive inside M', negative outside.
    double Mprime_depth(const Vec3& z) const { return spec_.radius_Mprime - (z - spec_.center_M).norm(); }

    void require_in_Mprime(const Vec3& z) const {
        if (!in_Mprime(z)) {
            std::ostringstream os;
            os << "point (" << z.transpose() << ") lies outside M'";
            throw DomainError(os.str());
        }
    }

    // --- metric ---------------------------------------------------------
    double metric_factor(const Vec3& z) const {
        if (spec_.metric == MetricKind::euclidean) return 1.0;
        return 1.0 + spec_.metric_epsilon * std::exp(-(z - metric_center_).squaredNorm());
    }

    Vec3 metric_factor_gradient(const Vec3& z) const {
        if (spec_.metric == MetricKind::euclidean) return Vec3::Zero();
        const Vec3 d = z - metric_center_;
        return -2.0 * spec_.metric_epsilon * std::exp(-d.squaredNorm()) * d;
    }

    Mat3 metric(const Vec3& z) const { return metric_factor(z) * Mat3::Identity(); }

    double inner(const Vec3& z, const Vec3& a, const Vec3& b) const { return metric_factor(z) * a.dot(b); }

    /// Christoffel symbols, gamma[k](i, j) = Γ^k_ij.
    std::array<Mat3, 3> christoffel(const Vec3& z) const {
        require_in_Mprime(z);
        std::array<Mat3, 3> gamma;
        const Vec3 ds = metric_factor_gradient(z) / (2.0 * metric_factor(z)); // ∂σ, g = e^{2σ} I
        for (int k = 0; k < 3; ++k) {
            gamma[k].setZero();
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    gamma[k](i, j) = (i == k ? ds[j] : 0.0) + (j == k ? ds[i] : 0.0) - (i == j ? ds[k] : 0.0);
        }
        return gamma;
    }

    /// Geodesic acceleration -Γ^k_ij v^i v^j (no domain check).
    Vec3 acceleration(const Vec3& z, const Vec3& v) const {
        if (spec_.metric == MetricKind::euclidean) return Vec3::Zero();
        const Vec3 ds = metric_factor_gradient(z) / (2.0 * metric_factor(z));
        return -2.0 * v.dot(ds) * v + v.squaredNorm() * ds;
    }

    // --- foliation ------------------------------------------------------
    double x(const Vec3& z) const {
        if (spec_.foliation == FoliationKind::radial)
            return (z - spec_.foliation_center).squaredNorm() + spec_.layer_offset;
        return spec_.foliation_normal.dot(z) + spec_.layer_offset;
    }

    Vec3 grad_x(const Vec3& z) const {
        if (spec_.foliation == FoliationKind::radial) return 2.0 * (z - spec_.foliation_center);
        return spec_.foliation_normal;
    }

    Mat3 hess_x(const Vec3&) const {
        if (spec_.foliation == FoliationKind::radial) return 2.0 * Mat3::Identity();
        return Mat3::Zero();
    }

    /// Range of x over M' (closed form for both families).
    std::pair<double, double> x_range_Mprime() const {
        const double r = spec_.radius_Mprime;
        if (spec_.foliation == FoliationKind::radial) {
            const double d = (spec_.center_M - spec_.foliation_center).norm();
            const double lo = std::max(0.0, d - r), hi = d + r;
            return {lo * lo + spec_.layer_offset, hi * hi + spec_.layer_offset};
        }
        const double mid = spec_.foliation_normal.dot(spec_.center_M), span = spec_.foliation_normal.norm() * r;
        return {mid - span + spec_.layer_offset, mid + span + spec_.layer_offset};
    }

    /// d^2/dt^2 x(γ(t)) for the geodesic through (z, v).
    double x_second_derivative(const Vec3& z, const Vec3& v) const {
        return v.dot(hess_x(z) * v) + grad_x(z).dot(acceleration(z, v));
    }

    // --- transversal / leaf frame ----------------------------------------
    Vec3 transversal(const Vec3& z) const {
        const Vec3 gx = grad_x(z);
        const double n2 = gx.squaredNorm();
        if (std::sqrt(n2) < 1e-8) throw DegenerateFoliationError("|grad x| below 1e-8 at the base point");
        // g^{-1} dx / (dx(g^{-1} dx)); the conformal factor cancels.
        return gx / n2;
    }

    /// g-orthonormal basis (e_a, e_b) of ker dx_z.
    std::pair<Vec3, Vec3> leaf_frame(const Vec3& z) const {
        const Vec3 gx = grad_x(z);
        if (gx.norm() < 1e-8) throw DegenerateFoliationError("|grad x| below 1e-8 at the base point");
        const Vec3 n = gx.normalized();
        int axis = 0;
        for (int k = 1; k < 3; ++k)
            if (std::abs(n[k]) < std::abs(n[axis])) axis = k;
        Vec3 ref = Vec3::Zero();
        ref[axis] = 1.0;
        Vec3 ea = (ref - ref.dot(n) * n).normalized();
        Vec3 eb = n.cross(ea);
        const double s = 1.0 / std::sqrt(metric_factor(z));
        return {s * ea, s * eb};
    }

    /// Leaf direction at angle theta in the canonical leaf frame.
    Vec3 leaf_direction(const Vec3& z, double theta) const {
        const auto [ea, eb] = leaf_frame(z);
        return std::cos(theta) * ea + std::sin(theta) * eb;
    }

    /// Local leaf coordinates of p relative to z: (g_z(e_a, p - z), g_z(e_b, p - z)).
    Eigen::Vector2d leaf_coordinates(const Vec3& z, const Vec3& p) const {
        const auto [ea, eb] = leaf_frame(z);
        const double c = metric_factor(z);
        return {c * ea.dot(p - z), c * eb.dot(p - z)};
    }

    TangentDecomposition decompose_tangent(const Vec3& z, const Vec3& v) const {
        const Vec3 T = transversal(z);
        TangentDecomposition d;
        d.lambda = grad_x(z).dot(v);
        d.omega = v - d.lambda * T;
        return d;
    }

    Vec3 compose_tangent(const Vec3& z, double lambda, const Vec3& omega) const {
        return lambda * transversal(z) + omega;
    }

    // --- geodesic flow ---------------------------------------------------
    void rk4_step(Vec3& z, Vec3& v, double dt) const {
        if (spec_.metric == MetricKind::euclidean) {
            z += dt * v;
            return;
        }
        const Vec3 k1z = v, k1v = acceleration(z, v);
        const Vec3 z2 = z + 0.5 * dt * k1z, v2 = v + 0.5 * dt * k1v;
        const Vec3 k2z = v2, k2v = acceleration(z2, v2);
        const Vec3 z3 = z + 0.5 * dt * k2z, v3 = v + 0.5 * dt * k2v;
        const Vec3 k3z = v3, k3v = acceleration(z3, v3);
        const Vec3 z4 = z + dt * k3z, v4 = v + dt * k3v;
        const Vec3 k4z = v4, k4v = acceleration(z4, v4);
        z += dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }

    /// Default bound on the affine parameter before a trace is declared
    /// non-exiting: twice the exit bound 2ε/C0 + 4·C1/ε evaluated with ε = 1
    /// and the conservative C0 = 1.
    double nominal_trace_limit() const {
        const auto [lo, hi] = x_range_Mprime();
        const double c1 = std::max(std::abs(lo), std::abs(hi));
        return 2.0 * (2.0 + 4.0 * c1);
    }

    /// Integrates the geodesic through (z, v) in both directions with fixed
    /// step RK4 until it leaves M'. `stop(t, z, v)` may end a direction early
    /// (no exit recorded on that side).
    template <class Stop>
    void trace_into(GeodesicTrace& out, const Vec3& z, const Vec3& v, double step, double t_limit, Stop&& stop) const {
        require_in_Mprime(z);
        if (!(step > 0.0)) throw ArgumentError("trace step must be positive");
        if (v.norm() == 0.0) throw ArgumentError("trace needs a non-zero tangent vector");
        out.samples.clear();
        out.exited_forward = out.exited_backward = false;

        auto run = [&](double dir, bool& exited, double& t_exit, Vec3& z_exit, Vec3& v_exit) {
            Vec3 zz = z, vv = v;
            double t = 0.0;
            double prev_depth = Mprime_depth(z);
            Vec3 pz = z, pv = v;
            const std::size_t max_steps = static_cast<std::size_t>(std::ceil(t_limit / step)) + 1;
            for (std::size_t n = 1;; ++n) {
                if (n > max_steps) {
                    std::ostringstream os;
                    os << "geodesic from (" << z.transpose() << ") did not exit M' within affine parameter "
                       << t_limit;
                    throw IntegrationError(os.str());
                }
                rk4_step(zz, vv, dir * step);
                t = dir * step * static_cast<double>(n);
                out.samples.push_back({t, zz, vv});
                const double depth = Mprime_depth(zz);
                if (depth < 0.0) {
                    exited = true;
                    const double frac = prev_depth / (prev_depth - depth);
                    t_exit = t - dir * step * (1.0 - frac);
                    z_exit = pz + frac * (zz - pz);
                    v_exit = pv + frac * (vv - pv);
                    return;
                }
                if (stop(t, zz, vv)) return;
                prev_depth = depth;
                pz = zz;
                pv = vv;
            }
        };

        run(-1.0, out.exited_backward, out.t_exit_minus, out.z_exit_minus, out.v_exit_minus);
        std::reverse(out.samples.begin(), out.samples.end());
        out.samples.push_back({0.0, z, v});
        run(1.0, out.exited_forward, out.t_exit_plus, out.z_exit_plus, out.v_exit_plus);
    }

    void trace_into(GeodesicTrace& out, const Vec3& z, const Vec3& v, double step) const {
        trace_into(out, z, v, step, nominal_trace_limit(), [](double, const Vec3&, const Vec3&) { return false; });
    }

    GeodesicTrace trace_geodesic(const Vec3& z, const Vec3& v, double step) const {
        GeodesicTrace tr;
        trace_into(tr, z, v, step);
        return tr;
    }

    GeodesicTrace trace_geodesic(const Vec3& z, const Vec3& v, double step, double t_limit) const {
        GeodesicTrace tr;
        trace_into(tr, z, v, step, t_limit, [](double, const Vec3&, const Vec3&) { return false; });
        return tr;
    }

    /// α(z, λ, ω) = ½ d²/dt² x(γ(t)) at t = 0 = ½ (Hess x(v, v) + dx(γ̈)).
    double alpha(const Vec3& z, double lambda, const Vec3& omega) const {
        return 0.5 * x_second_derivative(z, compose_tangent(z, lambda, omega));
    }

private:
    void validate() const {
        const auto& s = spec_;
        if (!(s.radius_M > 0.0)) throw ConfigError("radius_M must be positive");
        if (!(s.radius_Mprime > s.radius_M)) throw ConfigError("M must lie in the interior of M' (radius_Mprime > radius_M)");
        if (s.metric == MetricKind::conformal && !(s.metric_epsilon > -1.0))
            throw ConfigError("conformal metric needs epsilon > -1 for positivity");
        if (s.foliation == FoliationKind::planar && s.foliation_normal.norm() < 1e-8)
            throw DegenerateFoliationError("planar foliation normal vanishes");
        if (s.foliation == FoliationKind::radial) {
            const double d = (s.center_M - s.foliation_center).norm();
            if (d - s.radius_Mprime < 1e-8 / 2.0) {
                std::ostringstream os;
                os << "foliation centre (" << s.foliation_center.transpose() << ") lies in M' where grad x vanishes";
                throw DegenerateFoliationError(os.str());
            }
        }
        // sampled checks: grad x and metric positivity on M'
        const int n = 9;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    const Vec3 u = Vec3(i, j, k) / (n - 1) * 2.0 - Vec3::Ones();
                    if (u.norm() > 1.0) continue;
                    const Vec3 z = s.center_M + s.radius_Mprime * u;
                    if (grad_x(z).norm() < 1e-8) throw DegenerateFoliationError("grad x vanishes on M'");
                    if (!(metric_factor(z) > 0.0)) throw ConfigError("metric not positive definite on M'");
                }
    }

    GeometrySpec spec_;
    Vec3 metric_center_;
};

// ---------------------------------------------------------------------------
// Convexity certificate

struct ConvexityCertificate {
    double epsilon = 0.0;
    double C0 = 0.0;      // min d²x(γ)/dt² where |dx(γ)/dt| <= ε
    double C1 = 0.0;      // sup |x| on M'
    double T_bound = 0.0; // 2ε/C0 + 4 C1/ε
    double lambda0 = 0.0;
    double C_quad = 0.0;  // x(γ(t)) >= x + λ t + C_quad t²/2 for |λ| < λ0
    double max_exit = 0.0;
    std::size_t n_samples = 0;
};

struct CertifyOptions {
    std::size_t n_samples = 1000;
    double epsilon = 1.0;
    double lambda0 = 80.0;
    double step = 1e-2;
    double quad_safety = 0.9;
    std::uint64_t seed = 20240611;
};

/// Deterministic uniform [0, 1) from a 64-bit engine (bit-exact across
/// standard libraries).
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline Vec3 random_point_in_ball(std::mt19937_64& rng, const Vec3& c, double r) {
    for (;;) {
        const Vec3 u(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);
        if (u.squaredNorm() <= 1.0) return c + r * u;
    }
}

struct SampledGeodesic {
    Vec3 z;
    double lambda;
    double theta;
};

/// Random geodesic parameters: base points uniform in M', leaf angle uniform,
/// λ uniform in [-lambda_max, lambda_max] except every fourth draw, which is
/// tangent to the leaf (λ = 0).
inline std::vector<SampledGeodesic> sample_geodesics(const Geometry& g, std::size_t n, double lambda_max,
                                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<SampledGeodesic> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SampledGeodesic s;
        s.z = random_point_in_ball(rng, g.spec().center_M, g.spec().radius_Mprime);
        s.theta = 2.0 * kPi * uniform01(rng);
        const double u = 2.0 * uniform01(rng) - 1.0;
        s.lambda = (i % 4 == 0) ? 0.0 : lambda_max * u;
        out.push_back(s);
    }
    return out;
}

/// Smallest ratio 2(x(γ(t)) - x - λt)/t² over the samples with |t| >= tmin.
inline double quadratic_lower_ratio(const Geometry& g, const GeodesicTrace& tr, double lambda, double x0,
                                    double tmin) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = tr.first_inside(); i < tr.end_inside(); ++i) {
        const auto& s = tr.samples[i];
        if (std::abs(s.t) < tmin) continue;
        best = std::min(best, 2.0 * (g.x(s.z) - x0 - lambda * s.t) / (s.t * s.t));
    }
    return best;
}

inline ConvexityCertificate certify_convexity(const Geometry& g, const CertifyOptions& opt = {}) {
    if (opt.n_samples < 1000) throw ArgumentError("certify_convexity needs at least 1000 sampled geodesics");
    if (!(opt.epsilon > 0.0)) throw ArgumentError("certificate epsilon must be positive");
    ConvexityCertificate cert;
    cert.epsilon = opt.epsilon;
    cert.lambda0 = opt.lambda0;
    cert.n_samples = opt.n_samples;
    const auto [xlo, xhi] = g.x_range_Mprime();
    cert.C1 = std::max(std::abs(xlo), std::abs(xhi));

    const auto draws = sample_geodesics(g, opt.n_samples, opt.lambda0, opt.seed);
    double c0 = std::numeric_limits<double>::infinity();
    double cq = std::numeric_limits<double>::infinity();
    GeodesicTrace tr;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const auto& d = draws[i];
        const Vec3 v = g.compose_tangent(d.z, d.lambda, g.leaf_direction(d.z, d.theta));
        g.trace_into(tr, d.z, v, opt.step);
        for (std::size_t k = tr.first_inside(); k < tr.end_inside(); ++k) {
            const auto& s = tr.samples[k];
            const double d1 = g.grad_x(s.z).dot(s.v);
            if (std::abs(d1) > opt.epsilon) continue;
            const double d2 = g.x_second_derivative(s.z, s.v);
            if (!(d2 > 0.0)) {
                std::ostringstream os;
                os << "concavity violated on sampled geodesic #" << i << " (z = " << d.z.transpose()
                   << ", lambda = " << d.lambda << ", theta = " << d.theta << ") at t = " << s.t
                   << ": d/dt x = " << d1 << ", d2/dt2 x = " << d2;
                throw CertificateError(os.str());
            }
            c0 = std::min(c0, d2);
        }
        cert.max_exit = std::max({cert.max_exit, std::abs(tr.t_exit_plus), std::abs(tr.t_exit_minus)});
        cq = std::min(cq, quadratic_lower_ratio(g, tr, d.lambda, g.x(d.z), opt.step));
    }
    if (!std::isfinite(c0)) throw CertificateError("no sample met |d/dt x| <= epsilon; increase n_samples");
    cert.C0 = c0;
    cert.T_bound = 2.0 * opt.epsilon / c0 + 4.0 * cert.C1 / opt.epsilon;
    if (cert.max_exit > cert.T_bound)
        throw CertificateError("sampled exit parameter exceeds the certified bound T");
    if (!(cq > 0.0)) {
        std::ostringstream os;
        os << "quadratic lower bound fails: smallest sampled ratio " << cq;
        throw CertificateError(os.str());
    }
    cert.C_quad = opt.quad_safety * cq;
    return cert;
}

} // namespace folxray
