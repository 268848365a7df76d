// SPDX-License-Identifier: Apache-2.0
// Reference computations for the tests. Nothing here calls into the library's
// quadrature or tracing code.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <type_traits>
#include <utility>
#include <vector>

namespace oracle {

constexpr double pi = 3.14159265358979323846;

struct Rule {
    std::vector<double> x, w;
};

// Golub-Welsch: eigen-decomposition of the Jacobi matrix.
inline Rule gauss_legendre(int n, double a, double b) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Rule r;
    for (int k = 0; k < n; ++k) {
        const double v = es.eigenvectors()(0, k);
        r.x.push_back(0.5 * (a + b) + 0.5 * (b - a) * es.eigenvalues()[k]);
        r.w.push_back(v * v * (b - a));
    }
    return r;
}

// composite Simpson on [a, b] with n (even) panels
template <class F>
double simpson(F&& f, double a, double b, int n) {
    const double hh = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * hh);
    return s * hh / 3.0;
}

// quintic smoothstep bump: 1 on [-1,1], 0 outside [-2,2]
inline double bump(double s) {
    s = std::fabs(s);
    if (s >= 2.0) return 0.0;
    if (s <= 1.0) return 1.0;
    const double u = 2.0 - s; // 1 at s = 1, 0 at s = 2
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

// parameters t where z + t v meets the sphere |p - c| = r (t_minus <= t_plus)
inline std::pair<double, double> chord(const Eigen::Vector3d& z, const Eigen::Vector3d& v, const Eigen::Vector3d& c,
                                       double r) {
    const Eigen::Vector3d d = z - c;
    const double a = v.squaredNorm(), b = d.dot(v), cc = d.squaredNorm() - r * r;
    const double disc = std::sqrt(b * b - a * cc);
    return {(-b - disc) / a, (-b + disc) / a};
}

// unit vectors spanning the plane orthogonal to n
inline std::pair<Eigen::Vector3d, Eigen::Vector3d> plane_basis(const Eigen::Vector3d& n) {
    const Eigen::Vector3d u = n.normalized();
    const Eigen::Vector3d ref = std::fabs(u[2]) < 0.9 ? Eigen::Vector3d(0, 0, 1) : Eigen::Vector3d(1, 0, 0);
    const Eigen::Vector3d a = u.cross(ref).normalized();
    return {a, u.cross(a)};
}

// Brute-force A_h f(z) for the Euclidean default geometry (x = |z|^2, M' the
// ball of radius 1.1 at (2,0,0)): straight rays, own Gauss-Legendre and leaf
// basis, trapezoid in t on samples n·dt with the exit located by linear
// interpolation of the depth. Scattering: weight 1/x, lambda scale
// sqrt(h)·max(x, sqrt(h)).
template <class F>
auto brute_force_A(const F& f, const Eigen::Vector3d& z, double h, double Lambda, int nl, int nw, double dt,
                   bool scattering = false) {
    const Eigen::Vector3d cM(2, 0, 0);
    const double RMp = 1.1;
    const double x0 = z.squaredNorm();
    const Eigen::Vector3d T = 2.0 * z / (4.0 * x0);
    const auto [e1, e2] = oracle::plane_basis(z);
    const auto gl = oracle::gauss_legendre(nl, -2 * Lambda, 2 * Lambda);
    const double s = scattering ? std::sqrt(h) * std::max(x0, std::sqrt(h)) : std::sqrt(h);
    auto damp = [&](const Eigen::Vector3d& p) {
        const double x = p.squaredNorm();
        return scattering ? std::exp((1.0 / x - 1.0 / x0) / h) : std::exp((x0 - x) / h);
    };
    using T_ = std::decay_t<decltype(f(z))>;
    auto depth = [&](const Eigen::Vector3d& p) { return RMp - (p - cM).norm(); };
    T_ total{};
    for (int j = 0; j < nl; ++j) {
        const double lh = gl.x[j];
        const double chi = std::exp(-lh * lh / 2.0) * oracle::bump(lh / Lambda);
        if (chi == 0.0) continue;
        for (int k = 0; k < nw; ++k) {
            const double th = 2 * oracle::pi * k / nw;
            const Eigen::Vector3d v = s * lh * T + std::cos(th) * e1 + std::sin(th) * e2;
            auto g = [&](double t) {
                const Eigen::Vector3d p = z + t * v;
                return damp(p) * f(p);
            };
            // t = 0 shared between the two half-lines
            T_ ray{};
            for (int dir : {-1, 1}) {
                double prev_t = 0.0, prev_d = depth(z);
                for (int n = 1;; ++n) {
                    const double t = dir * n * dt;
                    const double d = depth(z + t * v);
                    if (d < 0.0) {
                        const double frac = prev_d / (prev_d - d);
                        const double te = t - dir * dt * (1.0 - frac);
                        const Eigen::Vector3d pe = (z + prev_t * v) + frac * ((z + t * v) - (z + prev_t * v));
                        const T_ ge = damp(pe) * f(pe);
                        ray += 0.5 * std::abs(te - prev_t) * (g(prev_t) + ge);
                        break;
                    }
                    ray += 0.5 * dt * (g(prev_t) + g(t));
                    prev_t = t;
                    prev_d = d;
                }
            }
            total += gl.w[j] * (2 * oracle::pi / nw) * s * chi * ray;
        }
    }
    return total;
}

} // namespace oracle
