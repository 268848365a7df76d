// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "folxray/modnormal.hpp"

#include <limits>

namespace folxray {

struct SymbolSample {
    Vec3 z = Vec3::Zero();
    double xi = 0.0;
    Eigen::Vector2d eta = Eigen::Vector2d::Zero();
    double h = 0.0; // 0: principal symbol
    cplx value{};
    WeightVariant variant = WeightVariant::global;
};

struct SymbolOptions {
    double resolution = 1.0;     // multiplies every node count
    double damping_floor = 1e-12;
    double window_radius = 2.5;  // plane-wave probe window (plateau in |p - z|)
    double probe_fault = 0.2;    // probe/quadrature mismatch flagged above this
};

/// Composite Gauss-Legendre rule on [lo, hi] with panel breaks at the given
/// interior points, panels no wider than 10 / k(|λ|) where k is the local
/// angular frequency; 12 nodes per panel.
template <class K>
QuadratureRule adaptive_gl(double lo, double hi, const std::vector<double>& breaks, K&& k, double resolution) {
    std::vector<double> cuts{lo};
    for (double b : breaks)
        if (b > lo && b < hi) cuts.push_back(b);
    cuts.push_back(hi);
    QuadratureRule out;
    const auto ref = gauss_legendre(12, -1.0, 1.0);
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        double a = cuts[s];
        const double b = cuts[s + 1];
        while (a < b - 1e-14) {
            double w = 10.0 / (resolution * k(std::abs(a)));
            w = 10.0 / (resolution * std::max(k(std::abs(a)), k(std::abs(std::min(b, a + w)))));
            // avoid a sliver panel at the end of the segment
            if (a + 1.25 * w >= b) w = b - a;
            const double mid = a + 0.5 * w;
            for (std::size_t i = 0; i < ref.size(); ++i) {
                out.nodes.push_back(mid + 0.5 * w * ref.nodes[i]);
                out.weights.push_back(0.5 * w * ref.weights[i]);
            }
            a += w;
        }
    }
    return out;
}

struct PlaneWaveProbe {
    cplx value{};
    double footprint = 0.0; // largest |p - z| carrying non-negligible weight
};

struct ProbeConsistency {
    cplx probe{};
    cplx quadrature{};
    double mismatch = 0.0;
    bool fault = false;
};

struct EllipticityPlan {
    int grid_n = 3;                                       // lattice over M's bounding box
    std::vector<double> radii{0.0, 1.0, 3.0, 10.0, 30.0, 100.0};
    int n_directions = 8;                                 // angles in the (ξ, |η|) half plane
    std::vector<double> eta_angles{0.0, kPi / 2.0};       // orientation of η in the leaf
    double threshold = 0.01;
};

struct EllipticityCertificate {
    double c_min = 0.0;
    double a0_ref = 0.0; // |a0(z0, 0, 0)| at the centre of M
    double threshold = 0.0;
    bool pass = false;
    SymbolSample argmin;
    std::size_t n_samples = 0;
    std::vector<SymbolSample> samples;
};

/// Symbol evaluation for the operator configured in a NormalOperator. The
/// weight variant of the configuration selects global or scattering symbols;
/// the semiclassical parameter is passed per call.
class SymbolCalculator {
public:
    explicit SymbolCalculator(const NormalOperator& op, SymbolOptions opt = {}) : op_(op), opt_(opt) {
        if (!(opt_.resolution > 0.0)) throw ArgumentError("symbol resolution must be positive");
    }

    SymbolCalculator(NormalOperator&&, SymbolOptions = {}) = delete; // would dangle

    const NormalOperator& op() const { return op_; }
    const SymbolOptions& options() const { return opt_; }

    // --- principal symbol ---------------------------------------------------

    /// a0(z, ξ, η) with the t̂-integral done in closed form:
    /// ∫ e^{-a t̂² - b t̂} dt̂ = √(π/a) e^{b²/(4a)}, a = α(1 - iξ),
    /// b = λ̂(1 - iξ) - i η·ω.
    cplx principal_symbol(const Vec3& z, double xi, const Eigen::Vector2d& eta) const {
        const auto& g = op_.geometry();
        g.require_in_Mprime(z);
        const auto& cut = op_.config().cutoff;
        const double en = eta.norm();
        const double L = std::max(std::abs(cut.lo()), std::abs(cut.hi()));

        const int nw = omega_count(en, L, 1.0);
        const auto om = circle_rule(nw);
        std::vector<double> al(nw);
        const auto [ea, eb] = g.leaf_frame(z);
        double amin = std::numeric_limits<double>::infinity();
        for (int k = 0; k < nw; ++k) {
            al[k] = g.alpha(z, 0.0, std::cos(om.nodes[k]) * ea + std::sin(om.nodes[k]) * eb);
            if (!(al[k] > 0.0)) throw CertificateError("alpha(z, 0, omega) is not positive");
            amin = std::min(amin, al[k]);
        }
        const auto lam = lambda_rule(std::abs(xi), en, amin);
        const cplx one_m(1.0, -xi);
        cplx acc{};
        for (int k = 0; k < nw; ++k) {
            const double eo = eta[0] * std::cos(om.nodes[k]) + eta[1] * std::sin(om.nodes[k]);
            const cplx a = al[k] * one_m;
            const cplx pre = std::sqrt(kPi / a);
            cplx s{};
            for (std::size_t j = 0; j < lam.size(); ++j) {
                const double l = lam.nodes[j];
                const double c = cut(l, al[k]);
                if (c == 0.0) continue;
                const cplx b = l * one_m - cplx(0.0, eo);
                s += lam.weights[j] * c * std::exp(b * b / (4.0 * a));
            }
            acc += om.weights[k] * pre * s;
        }
        return acc;
    }

    /// x² a0(z, ξ_sc, η_sc): the scattering principal symbol without the h.
    cplx scattering_principal(const Vec3& z, double xi_sc, const Eigen::Vector2d& eta_sc) const {
        const double x = op_.geometry().x(z);
        if (!(x > 0.0)) throw DomainError("scattering symbol needs x(z) > 0");
        return x * x * principal_symbol(z, xi_sc, eta_sc);
    }

    /// Principal symbol of the configured variant.
    cplx principal(const Vec3& z, double xi, const Eigen::Vector2d& eta) const {
        return op_.config().variant == WeightVariant::global ? principal_symbol(z, xi, eta)
                                                             : scattering_principal(z, xi, eta);
    }

    /// Closed form of a0 for the untruncated α-matched Gaussian cutoff:
    /// 2π (1+ξ²)^{-1/2} ∫ exp(-(η·ω)² / (2α(1+ξ²))) dω.
    double gaussian_closed_form(const Vec3& z, double xi, const Eigen::Vector2d& eta) const {
        const auto& g = op_.geometry();
        g.require_in_Mprime(z);
        const double q = 1.0 + xi * xi;
        const double c = eta.squaredNorm() / (2.0 * q);
        const int n = 64 + static_cast<int>(std::ceil(4.0 * c + 8.0 * std::sqrt(c)));
        const auto om = circle_rule(n);
        const auto [ea, eb] = g.leaf_frame(z);
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            const double th = om.nodes[k];
            const double a = g.alpha(z, 0.0, std::cos(th) * ea + std::sin(th) * eb);
            if (!(a > 0.0)) throw CertificateError("alpha(z, 0, omega) is not positive");
            const double eo = eta[0] * std::cos(th) + eta[1] * std::sin(th);
            acc += om.weights[k] * std::exp(-eo * eo / (2.0 * a * q));
        }
        return 2.0 * kPi / std::sqrt(q) * acc;
    }

    /// (1/|ξ̂|) ∫ χ̃(-η̂·ω(θ)/ξ̂) dθ: the integral of the cutoff over the
    /// critical set of the phase. |a0(Rζ̂)| R tends to 2π times this.
    double highfreq_limit(const Vec3& z, double xih, const Eigen::Vector2d& etah) const {
        const auto& g = op_.geometry();
        g.require_in_Mprime(z);
        const double r = std::hypot(xih, etah.norm());
        if (std::abs(r - 1.0) > 1e-9) throw ArgumentError("highfreq_limit needs a unit direction");
        const auto& cut = op_.config().cutoff;
        const auto [ea, eb] = g.leaf_frame(z);
        auto alpha_at = [&](double th) { return g.alpha(z, 0.0, std::cos(th) * ea + std::sin(th) * eb); };
        const double en = etah.norm();
        const double L = std::max(std::abs(cut.lo()), std::abs(cut.hi()));
        if (en > 0.0 && std::abs(xih) * L / en < 0.9) {
            // λ̂ parameterisation: cos(θ - θη) = -ξ̂ λ̂ / |η̂|, two branches
            const double th_eta = std::atan2(etah[1], etah[0]);
            const auto lam = adaptive_gl(cut.lo(), cut.hi(), kink_points(), [](double) { return 1.0; },
                                         4.0 * opt_.resolution);
            double acc = 0.0;
            for (std::size_t j = 0; j < lam.size(); ++j) {
                const double l = lam.nodes[j];
                const double c = -xih * l / en;
                const double phi = std::acos(c);
                const double jac = 1.0 / (en * std::sqrt(1.0 - c * c));
                for (double th : {th_eta + phi, th_eta - phi}) acc += lam.weights[j] * jac * cut(l, alpha_at(th));
            }
            return acc;
        }
        const int n = static_cast<int>(std::ceil(4096 * opt_.resolution));
        const auto om = circle_rule(n);
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            const double th = om.nodes[k];
            const double eo = etah[0] * std::cos(th) + etah[1] * std::sin(th);
            acc += om.weights[k] * cut(-eo / xih, alpha_at(th));
        }
        return acc / std::abs(xih);
    }

    // --- full symbol by ray quadrature -------------------------------------

    /// a_h(z, ξ, η) = ∫∫∫ e^{iφ(γ(t))} e^{(Φ(x(γ)) - Φ(x))/h} χ̃(λ/s) dt dλ dω with
    /// φ = ξ(x(γ) - x)/h + η·y/√h (global) or ξ(x(γ) - x)/(x²h) + η·y/(x√h)
    /// (scattering) and s the λ scale. Integrated on traced geodesics in the
    /// rescaled variables t̂ = t/s, λ̂ = λ/s; the value carries the density s².
    cplx symbol_quadrature(const Vec3& z, double xi, const Eigen::Vector2d& eta, double h) const {
        if (!(h > 0.0) || h > 0.5) throw ArgumentError("symbol_quadrature needs h in (0, 0.5]");
        const auto& g = op_.geometry();
        const auto& cfg = op_.config();
        const auto& cert = op_.certificate();
        g.require_in_Mprime(z);
        const double x0 = g.x(z);
        const bool sc = cfg.variant == WeightVariant::scattering;
        if (sc && !(x0 > 0.0)) throw DomainError("scattering symbol needs x(z) > 0");
        NormalOpConfig c2 = cfg;
        c2.h = h;
        const double sh = std::sqrt(h);
        const double s = c2.lambda_scale(x0);
        const double kx = sc ? xi / (x0 * x0 * h) : xi / h;
        const Eigen::Vector2d ky = sc ? Eigen::Vector2d(eta / (x0 * sh)) : Eigen::Vector2d(eta / sh);
        // frequencies in rescaled units
        const double xi_e = std::abs(kx) * s * s, eta_e = ky.norm() * s;
        const double phi0 = c2.phi(x0);
        const double log_floor = std::log(opt_.damping_floor);
        const auto& cut = cfg.cutoff;
        const double L = std::max(std::abs(cut.lo()), std::abs(cut.hi()));

        const int nw = std::max(static_cast<int>(std::ceil(cfg.n_omega * opt_.resolution)), omega_count(eta_e, L, 1.0));
        const auto om = circle_rule(nw);
        const auto [ea, eb] = g.leaf_frame(z);
        const double cz = g.metric_factor(z);
        std::vector<Vec3> dirs(nw);
        std::vector<double> al(nw);
        double amin = std::numeric_limits<double>::infinity(), amax = 0.0;
        for (int k = 0; k < nw; ++k) {
            dirs[k] = std::cos(om.nodes[k]) * ea + std::sin(om.nodes[k]) * eb;
            al[k] = g.alpha(z, 0.0, dirs[k]);
            amin = std::min(amin, al[k]);
            amax = std::max(amax, al[k]);
        }
        if (!(amin > 0.0)) throw CertificateError("alpha(z, 0, omega) is not positive");
        const auto lam = lambda_rule(xi_e, eta_e, amin);
        const double t_limit = 2.0 * std::max(cert.T_bound, 1.0);

        std::vector<cplx> partial(lam.size());
        parallel_for(lam.size(), [&](std::size_t j) {
            const double lh = lam.nodes[j];
            const double lambda = s * lh;
            GeodesicTrace tr;
            cplx acc_j{};
            // half-width (t̂) of the damping window around the vertex
            const double wwin = std::sqrt(-log_floor / amin) + 1.0;
            const double rate = xi_e * 2.0 * amax * wwin + eta_e * 1.5 + std::abs(lh) + 4.0;
            const double dth = kPi / (2.0 * rate * opt_.resolution);
            const double dt = std::min(cfg.t_step / opt_.resolution, s * dth);
            for (int k = 0; k < nw; ++k) {
                const double c = cut(lh, al[k]);
                if (c == 0.0) continue;
                if (std::abs(lambda) >= cert.lambda0) {
                    std::ostringstream os;
                    os << "lambda = " << lambda << " outside the certified range |lambda| < " << cert.lambda0;
                    throw DampingViolationError(os.str());
                }
                const Vec3 v = g.compose_tangent(z, lambda, dirs[k]);
                auto stop = [&](double t, const Vec3& p, const Vec3& vv) {
                    if (t * g.grad_x(p).dot(vv) <= 0.0) return false;
                    return (c2.phi(g.x(p)) - phi0) / h < log_floor;
                };
                g.trace_into(tr, z, v, dt, t_limit, stop);
                cplx acc{};
                tr.for_each_node([&](double t, const Vec3& p, const Vec3&, double wt) {
                    const double xp = g.x(p);
                    const double e = (c2.phi(xp) - phi0) / h;
                    const double bound = op_.damping_bound_exponent(x0, lambda, t, h);
                    if (e > bound + std::log(1.01)) {
                        std::ostringstream os;
                        os << "damping factor exp(" << e << ") exceeds the Gaussian bound exp(" << bound
                           << ") at t = " << t << ", lambda = " << lambda;
                        throw DampingViolationError(os.str());
                    }
                    const Vec3 d = p - z;
                    const double ph = kx * (xp - x0) + cz * (ky[0] * ea.dot(d) + ky[1] * eb.dot(d));
                    acc += wt * std::exp(cplx(e, ph));
                });
                acc_j += om.weights[k] * c * acc;
            }
            partial[j] = lam.weights[j] * s * acc_j;
        });
        cplx total{};
        for (const auto& p : partial) total += p;
        return total;
    }

    /// Same as symbol_quadrature; requires the scattering configuration.
    cplx scattering_symbol(const Vec3& z, double xi_sc, const Eigen::Vector2d& eta_sc, double h) const {
        if (op_.config().variant != WeightVariant::scattering)
            throw ArgumentError("scattering_symbol needs the scattering weight");
        return symbol_quadrature(z, xi_sc, eta_sc, h);
    }

    // --- plane-wave probe --------------------------------------------------

    /// A_h applied at z to the windowed plane wave
    /// w(p) exp(i(ξ(x(p) - x(z))/h + η·y_z(p)/√h)) (scattering: ξ/(x²h), η/(x√h)).
    /// The carrier equals 1 at z, so the result estimates a_h(z, ξ, η).
    PlaneWaveProbe plane_wave_probe(const Vec3& z, double xi, const Eigen::Vector2d& eta, double h) const {
        const auto& g = op_.geometry();
        NormalOpConfig c2 = op_.config();
        c2.h = h;
        const NormalOperator op2(g, c2, op_.certificate());
        g.require_in_Mprime(z);
        const double x0 = g.x(z);
        const bool sc = c2.variant == WeightVariant::scattering;
        const double sh = std::sqrt(h);
        const double kx = sc ? xi / (x0 * x0 * h) : xi / h;
        const Eigen::Vector2d ky = sc ? Eigen::Vector2d(eta / (x0 * sh)) : Eigen::Vector2d(eta / sh);
        const auto [ea, eb] = g.leaf_frame(z);
        const double cz = g.metric_factor(z);
        const double R = opt_.window_radius;
        PlaneWaveProbe out;
        double wmax = 0.0;
        std::vector<std::pair<double, double>> reach; // (|p - z|, |weight|)
        op2.for_each_sample(z, [&](const Vec3& p, double w) {
            const Vec3 d = p - z;
            const double win = plateau(d.norm() / R);
            const double ph = kx * (g.x(p) - x0) + cz * (ky[0] * ea.dot(d) + ky[1] * eb.dot(d));
            out.value += w * win * std::exp(cplx(0.0, ph));
            wmax = std::max(wmax, std::abs(w));
            reach.emplace_back(d.norm(), std::abs(w));
        });
        for (const auto& [r, w] : reach)
            if (w > 1e-12 * wmax) out.footprint = std::max(out.footprint, r);
        if (out.footprint > R) {
            std::ostringstream os;
            os << "geodesic footprint " << out.footprint << " exceeds the probe window radius " << R;
            throw WindowError(os.str());
        }
        return out;
    }

    ProbeConsistency probe_consistency(const Vec3& z, double xi, const Eigen::Vector2d& eta, double h) const {
        ProbeConsistency c;
        c.probe = plane_wave_probe(z, xi, eta, h).value;
        c.quadrature = symbol_quadrature(z, xi, eta, h);
        c.mismatch = relative_error(c.probe, c.quadrature);
        c.fault = c.mismatch > opt_.probe_fault;
        return c;
    }

    // --- ellipticity ---------------------------------------------------------

    EllipticityCertificate certify_ellipticity(const EllipticityPlan& plan = {}) const {
        const auto& g = op_.geometry();
        if (plan.grid_n < 1 || plan.n_directions < 1 || plan.radii.empty() || plan.eta_angles.empty())
            throw ArgumentError("empty ellipticity sample plan");
        const Vec3 c = g.spec().center_M;
        const double R = g.spec().radius_M;
        std::vector<Vec3> zs;
        if (plan.grid_n == 1) zs.push_back(c);
        else
            for (int i = 0; i < plan.grid_n; ++i)
                for (int j = 0; j < plan.grid_n; ++j)
                    for (int k = 0; k < plan.grid_n; ++k) {
                        const Vec3 p = c + R * (Vec3(i, j, k) * (2.0 / (plan.grid_n - 1)) - Vec3::Ones());
                        if (g.in_M(p)) zs.push_back(p);
                    }
        std::vector<SymbolSample> todo;
        for (const auto& z : zs)
            for (double r : plan.radii) {
                if (r == 0.0) {
                    todo.push_back({z, 0.0, Eigen::Vector2d::Zero(), 0.0, {}, op_.config().variant});
                    continue;
                }
                for (int d = 0; d < plan.n_directions; ++d) {
                    // directions in the closed half plane |η| >= 0 (conjugate symmetry covers the rest)
                    const double phi = kPi * d / std::max(1, plan.n_directions - 1);
                    for (double psi : plan.eta_angles) {
                        const double en = r * std::sin(phi);
                        const Eigen::Vector2d eta(en * std::cos(psi), en * std::sin(psi));
                        todo.push_back({z, r * std::cos(phi), eta, 0.0, {}, op_.config().variant});
                        if (std::sin(phi) < 1e-12) break; // η = 0: orientation irrelevant
                    }
                }
            }
        parallel_for(todo.size(), [&](std::size_t i) {
            auto& s = todo[i];
            s.value = principal(s.z, s.xi, s.eta);
        });
        EllipticityCertificate cert;
        cert.threshold = plan.threshold;
        cert.a0_ref = std::abs(principal(c, 0.0, Eigen::Vector2d::Zero()));
        cert.c_min = std::numeric_limits<double>::infinity();
        for (const auto& s : todo) {
            const double jb = std::sqrt(1.0 + s.xi * s.xi + s.eta.squaredNorm());
            const double v = std::abs(s.value) * jb;
            if (v < cert.c_min) {
                cert.c_min = v;
                cert.argmin = s;
            }
        }
        cert.n_samples = todo.size();
        cert.samples = std::move(todo);
        cert.pass = cert.c_min > plan.threshold * cert.a0_ref;
        return cert;
    }

private:
    std::vector<double> kink_points() const {
        const auto& cut = op_.config().cutoff;
        return {cut.shift - cut.Lambda, cut.shift + cut.Lambda};
    }

    /// λ̂ rule resolving the chirp e^{-iξλ̂²/(4α) - iλ̂η·ω/(2α)} left after the
    /// t̂-integration.
    QuadratureRule lambda_rule(double xi_abs, double eta_abs, double amin) const {
        const auto& cut = op_.config().cutoff;
        auto k = [=](double l) { return (xi_abs * l + eta_abs) / (2.0 * amin) + 2.0; };
        return adaptive_gl(cut.lo(), cut.hi(), kink_points(), k, opt_.resolution);
    }

    /// Trapezoid size on the leaf circle for leaf frequency |η|.
    int omega_count(double eta_abs, double L, double amin) const {
        const double band = L * eta_abs / (2.0 * amin) + eta_abs * eta_abs / (8.0 * amin) + 3.0 * eta_abs;
        return static_cast<int>(std::ceil((2.0 * band + 48.0) * opt_.resolution));
    }

    const NormalOperator& op_;
    SymbolOptions opt_;
};

} // namespace folxray
