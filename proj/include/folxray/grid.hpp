// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "folxray/geometry.hpp"
#include "folxray/quadrature.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace folxray {

/// Regular n0 x n1 x n2 node lattice with uniform spacing.
struct GridSpec {
    Vec3 origin = Vec3::Zero();
    double spacing = 1.0;
    std::array<int, 3> dims{0, 0, 0};

    std::size_t size() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
    }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
    }
    std::array<int, 3> unravel(std::size_t idx) const {
        const int k = static_cast<int>(idx % dims[2]);
        idx /= dims[2];
        const int j = static_cast<int>(idx % dims[1]);
        return {static_cast<int>(idx / dims[1]), j, k};
    }
    Vec3 node(std::size_t idx) const {
        const auto [i, j, k] = unravel(idx);
        return origin + spacing * Vec3(i, j, k);
    }
    bool operator==(const GridSpec& o) const {
        return origin == o.origin && spacing == o.spacing && dims == o.dims;
    }
};

/// Cubic n^3 lattice whose bounding box is the bounding box of M'.
inline GridSpec grid_covering_Mprime(const Geometry& g, int n) {
    if (n < 2) throw ArgumentError("grid needs at least 2 nodes per axis");
    const double r = g.spec().radius_Mprime;
    GridSpec s;
    s.origin = g.spec().center_M - Vec3::Constant(r);
    s.spacing = 2.0 * r / (n - 1);
    s.dims = {n, n, n};
    return s;
}

/// Trilinear stencil of a point: up to eight (node, weight) pairs. Points
/// outside the lattice box get an empty stencil.
struct TrilinearStencil {
    std::array<std::size_t, 8> node{};
    std::array<double, 8> weight{};
    int count = 0;
};

inline TrilinearStencil trilinear_stencil(const GridSpec& s, const Vec3& p) {
    TrilinearStencil st;
    const Vec3 q = (p - s.origin) / s.spacing;
    std::array<int, 3> i0{};
    std::array<double, 3> fr{};
    for (int a = 0; a < 3; ++a) {
        if (!(q[a] >= 0.0) || q[a] > s.dims[a] - 1) return st;
        i0[a] = std::min(static_cast<int>(std::floor(q[a])), s.dims[a] - 2);
        fr[a] = q[a] - i0[a];
    }
    for (int c = 0; c < 8; ++c) {
        const int dx = c >> 2, dy = (c >> 1) & 1, dz = c & 1;
        const double w = (dx ? fr[0] : 1.0 - fr[0]) * (dy ? fr[1] : 1.0 - fr[1]) * (dz ? fr[2] : 1.0 - fr[2]);
        st.node[st.count] = s.index(i0[0] + dx, i0[1] + dy, i0[2] + dz);
        st.weight[st.count] = w;
        ++st.count;
    }
    return st;
}

/// Scalar field on a lattice, with a mask of the nodes inside M.
struct GridFunction {
    GridSpec grid;
    std::vector<double> values;
    std::vector<std::uint8_t> support_mask;

    GridFunction() = default;
    GridFunction(const GridSpec& s, const Geometry& g) : grid(s), values(s.size(), 0.0), support_mask(s.size(), 0) {
        for (std::size_t i = 0; i < s.size(); ++i) support_mask[i] = g.in_M(s.node(i)) ? 1 : 0;
    }

    double operator()(const Vec3& p) const {
        const auto st = trilinear_stencil(grid, p);
        double acc = 0.0;
        for (int c = 0; c < st.count; ++c) acc += st.weight[c] * values[st.node[c]];
        return acc;
    }

    /// Zero the values outside the support mask.
    void enforce_support() {
        for (std::size_t i = 0; i < values.size(); ++i)
            if (!support_mask[i]) values[i] = 0.0;
    }

    double l2() const {
        double s = 0.0;
        for (double v : values) s += v * v;
        return std::sqrt(s);
    }
};

// ---------------------------------------------------------------------------
// Analytic phantoms

enum class PhantomKind { gaussian_bump, sum_of_bumps, smoothed_indicator };

struct Bump {
    Vec3 center = Vec3(2.0, 0.0, 0.0);
    double width = 0.2;
    double amplitude = 1.0;
};

/// Gaussian bumps A exp(-|p - c|^2 / w^2), or a smoothed ball indicator
/// A S(|p - c|) with S = 1 inside radius - smoothing, 0 beyond
/// radius + smoothing and a symmetric quintic ramp in between.
struct Phantom {
    PhantomKind kind = PhantomKind::gaussian_bump;
    std::vector<Bump> bumps{Bump{}};
    Vec3 center = Vec3(2.0, 0.0, 0.0);
    double radius = 0.5;
    double smoothing = 0.1;
    double amplitude = 1.0;

    /// Relative level below which a Gaussian counts as outside its support.
    static constexpr double kGaussianSupportLevel = 1e-2;

    static Phantom gaussian(const Vec3& c, double width, double amplitude = 1.0) {
        Phantom p;
        p.kind = PhantomKind::gaussian_bump;
        p.bumps = {Bump{c, width, amplitude}};
        return p;
    }
    static Phantom sum(std::vector<Bump> bumps) {
        Phantom p;
        p.kind = PhantomKind::sum_of_bumps;
        p.bumps = std::move(bumps);
        return p;
    }
    static Phantom indicator(const Vec3& c, double radius, double smoothing, double amplitude = 1.0) {
        Phantom p;
        p.kind = PhantomKind::smoothed_indicator;
        p.center = c;
        p.radius = radius;
        p.smoothing = smoothing;
        p.amplitude = amplitude;
        return p;
    }

    static double ramp(double r, double radius, double smoothing) {
        if (r <= radius - smoothing) return 1.0;
        if (r >= radius + smoothing) return 0.0;
        const double u = (r - (radius - smoothing)) / (2.0 * smoothing);
        return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
    }

    double operator()(const Vec3& p) const {
        if (kind == PhantomKind::smoothed_indicator)
            return amplitude * ramp((p - center).norm(), radius, smoothing);
        double acc = 0.0;
        for (const auto& b : bumps) acc += b.amplitude * std::exp(-(p - b.center).squaredNorm() / (b.width * b.width));
        return acc;
    }

    /// Throws unless every component sits strictly inside M.
    void check_support(const Geometry& g) const {
        const Vec3 cM = g.spec().center_M;
        const double R = g.spec().radius_M;
        auto fail = [](const std::string& what) { throw PreconditionError("phantom support leaves M: " + what); };
        if (kind == PhantomKind::smoothed_indicator) {
            if (!(smoothing > 0.0) || !(radius > smoothing)) throw ConfigError("indicator needs radius > smoothing > 0");
            if ((center - cM).norm() + radius + smoothing >= R) fail("smoothed indicator");
            return;
        }
        if (bumps.empty()) throw ConfigError("phantom has no bumps");
        const double reach = std::sqrt(std::log(1.0 / kGaussianSupportLevel));
        for (const auto& b : bumps) {
            if (!(b.width > 0.0)) throw ConfigError("bump width must be positive");
            if ((b.center - cM).norm() + b.width * reach >= R) fail("gaussian bump");
        }
    }

    /// Samples the phantom on the lattice, zero outside M.
    GridFunction sample(const GridSpec& s, const Geometry& g) const {
        GridFunction f(s, g);
        for (std::size_t i = 0; i < s.size(); ++i)
            if (f.support_mask[i]) f.values[i] = (*this)(s.node(i));
        return f;
    }
};

} // namespace folxray
