// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "folxray/geometry.hpp"
#include "folxray/grid.hpp"
#include "folxray/io.hpp"

#include <map>
#include <type_traits>

namespace folxray {

/// Integral of `field` along the M' segment of the geodesic with parameters
/// (z, λ, leaf angle θ), composite trapezoid at the given step.
template <class Field>
auto xray(const Geometry& g, const Field& field, const Vec3& z, double lambda, double theta, double step) {
    using T = std::decay_t<decltype(field(z))>;
    const Vec3 v = g.compose_tangent(z, lambda, g.leaf_direction(z, theta));
    GeodesicTrace tr;
    g.trace_into(tr, z, v, step);
    T acc{};
    tr.for_each_node([&](double, const Vec3& p, const Vec3&, double w) { acc += w * field(p); });
    return acc;
}

/// Sampling layout of a sinogram. The λ value of node (i, j) is
/// lambda_scale[i] * lambda_nodes[j]; ω nodes are leaf angles in the
/// canonical leaf frame of each base point.
struct SinogramGrid {
    std::vector<Vec3> base_points;
    std::vector<double> lambda_nodes;
    std::vector<double> lambda_scale;
    std::vector<double> omega_nodes;
};

struct Sinogram {
    std::vector<Vec3> base_points;
    std::vector<double> lambda_nodes;
    std::vector<double> lambda_scale;
    std::vector<double> omega_nodes;
    std::vector<double> data;
    std::uint64_t geometry_hash = 0;

    std::size_t n_base() const { return base_points.size(); }
    std::size_t n_lambda() const { return lambda_nodes.size(); }
    std::size_t n_omega() const { return omega_nodes.size(); }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (i * n_lambda() + j) * n_omega() + k; }
    double& at(std::size_t i, std::size_t j, std::size_t k) { return data[index(i, j, k)]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return data[index(i, j, k)]; }
    double lambda(std::size_t i, std::size_t j) const { return lambda_scale[i] * lambda_nodes[j]; }

    void check_consistent() const {
        if (lambda_scale.size() != n_base()) throw ArgumentError("sinogram lambda_scale size mismatch");
        if (data.size() != n_base() * n_lambda() * n_omega()) throw ArgumentError("sinogram data size mismatch");
        for (double d : data)
            if (!std::isfinite(d)) throw ArgumentError("sinogram contains non-finite data");
        if (!std::is_sorted(lambda_nodes.begin(), lambda_nodes.end()))
            throw ArgumentError("sinogram lambda nodes must be ascending");
        if (!std::is_sorted(omega_nodes.begin(), omega_nodes.end()))
            throw ArgumentError("sinogram omega nodes must be ascending");
    }

    /// Data at base point i for (λ, θ): linear in λ (no extrapolation),
    /// periodic linear in θ.
    double interpolate(std::size_t i, double lambda, double theta) const {
        const double s = lambda_scale[i];
        const double lh = lambda / s;
        const double lo = lambda_nodes.front(), hi = lambda_nodes.back();
        const double tol = 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
        if (lh < lo - tol || lh > hi + tol) {
            std::ostringstream os;
            os << "lambda = " << lambda << " outside the tabulated range [" << s * lo << ", " << s * hi << "]";
            throw CoverageError(os.str());
        }
        std::size_t j0 = 0;
        double fl = 0.0;
        if (n_lambda() > 1) {
            auto it = std::upper_bound(lambda_nodes.begin(), lambda_nodes.end(), lh);
            j0 = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - lambda_nodes.begin() - 1, 0,
                                                                     static_cast<std::ptrdiff_t>(n_lambda()) - 2));
            fl = std::clamp((lh - lambda_nodes[j0]) / (lambda_nodes[j0 + 1] - lambda_nodes[j0]), 0.0, 1.0);
        }
        // periodic bracket in θ
        const double two_pi = 2.0 * kPi;
        double th = std::fmod(theta, two_pi);
        if (th < 0) th += two_pi;
        const std::size_t nw = n_omega();
        std::size_t k0 = nw - 1, k1 = 0;
        double span = omega_nodes.front() + two_pi - omega_nodes.back(), off = th - omega_nodes.back();
        if (th < omega_nodes.front()) off = th + two_pi - omega_nodes.back();
        else {
            auto it = std::upper_bound(omega_nodes.begin(), omega_nodes.end(), th);
            const std::size_t k = static_cast<std::size_t>(it - omega_nodes.begin()) - 1;
            if (k + 1 < nw) {
                k0 = k;
                k1 = k + 1;
                span = omega_nodes[k1] - omega_nodes[k0];
                off = th - omega_nodes[k0];
            }
        }
        const double fw = nw == 1 ? 0.0 : off / span;
        auto at_l = [&](std::size_t j) { return (1.0 - fw) * at(i, j, k0) + fw * at(i, j, k1); };
        if (n_lambda() == 1) return at_l(0);
        return (1.0 - fl) * at_l(j0) + fl * at_l(j0 + 1);
    }

};

/// Exact-match lookup of sinogram base points (coordinates quantised to 1e-9).
class BaseLookup {
public:
    explicit BaseLookup(const Sinogram& s) {
        for (std::size_t i = 0; i < s.n_base(); ++i) map_[key(s.base_points[i])] = i;
    }

    /// Index of the base point equal to z, or throws CoverageError.
    std::size_t find(const Vec3& z) const {
        auto it = map_.find(key(z));
        if (it == map_.end()) {
            std::ostringstream os;
            os << "base point (" << z.transpose() << ") is not tabulated in the sinogram";
            throw CoverageError(os.str());
        }
        return it->second;
    }

private:
    static std::array<long long, 3> key(const Vec3& z) {
        return {std::llround(z[0] * 1e9), std::llround(z[1] * 1e9), std::llround(z[2] * 1e9)};
    }
    std::map<std::array<long long, 3>, std::size_t> map_;
};

/// Tabulates the X-ray transform over the node triples of `grid`.
template <class Field>
Sinogram forward_sinogram(const Geometry& g, const Field& field, const SinogramGrid& grid, double step) {
    if (grid.base_points.empty() || grid.lambda_nodes.empty() || grid.omega_nodes.empty())
        throw ArgumentError("forward_sinogram needs non-empty node grids");
    Sinogram s;
    s.base_points = grid.base_points;
    s.lambda_nodes = grid.lambda_nodes;
    s.lambda_scale = grid.lambda_scale.empty() ? std::vector<double>(grid.base_points.size(), 1.0) : grid.lambda_scale;
    s.omega_nodes = grid.omega_nodes;
    s.geometry_hash = g.hash();
    s.data.assign(s.n_base() * s.n_lambda() * s.n_omega(), 0.0);
    if (s.lambda_scale.size() != s.n_base()) throw ArgumentError("lambda_scale must have one entry per base point");
    parallel_for(s.n_base(), [&](std::size_t i) {
        const Vec3& z = s.base_points[i];
        g.require_in_Mprime(z);
        GeodesicTrace tr;
        const auto [ea, eb] = g.leaf_frame(z);
        for (std::size_t j = 0; j < s.n_lambda(); ++j)
            for (std::size_t k = 0; k < s.n_omega(); ++k) {
                const double th = s.omega_nodes[k];
                const Vec3 v = g.compose_tangent(z, s.lambda(i, j), std::cos(th) * ea + std::sin(th) * eb);
                g.trace_into(tr, z, v, step);
                double acc = 0.0;
                tr.for_each_node([&](double, const Vec3& p, const Vec3&, double w) { acc += w * field(p); });
                s.at(i, j, k) = acc;
            }
    });
    return s;
}

inline void require_same_geometry(const Sinogram& s, const Geometry& g) {
    if (s.geometry_hash != g.hash())
        throw ArgumentError("sinogram was produced for geometry " + hex64(s.geometry_hash) + ", not " + hex64(g.hash()));
}

// ---------------------------------------------------------------------------
// FXSG container: 64-byte header
//   0  magic "FXSG"         4  version u32
//   8  n_base u32          12  n_lambda u32      16  n_omega u32
//  20  reserved u32        24  geometry_hash u64
//  32..63 zero
// then f64 arrays: base points (3 per node), lambda nodes, lambda scales,
// omega nodes, data (base-major, then lambda, then omega).

inline constexpr std::uint32_t kSinogramVersion = 1;

inline io::json sinogram_header_json(const Sinogram& s) {
    return io::json{{"magic", "FXSG"},
                    {"version", kSinogramVersion},
                    {"n_base", s.n_base()},
                    {"n_lambda", s.n_lambda()},
                    {"n_omega", s.n_omega()},
                    {"geometry_hash", hex64(s.geometry_hash)},
                    {"layout", "base_points[3*n_base], lambda_nodes, lambda_scale[n_base], omega_nodes, data"}};
}

inline void write_sinogram(const std::filesystem::path& path, const Sinogram& s) {
    s.check_consistent();
    io::Header64 h;
    h.put_magic("FXSG");
    h.put<std::uint32_t>(4, kSinogramVersion);
    h.put<std::uint32_t>(8, static_cast<std::uint32_t>(s.n_base()));
    h.put<std::uint32_t>(12, static_cast<std::uint32_t>(s.n_lambda()));
    h.put<std::uint32_t>(16, static_cast<std::uint32_t>(s.n_omega()));
    h.put<std::uint64_t>(24, s.geometry_hash);
    auto os = io::open_out(path);
    os.write(h.bytes().data(), 64);
    std::vector<double> bp;
    bp.reserve(3 * s.n_base());
    for (const auto& z : s.base_points) bp.insert(bp.end(), {z[0], z[1], z[2]});
    io::write_f64(os, bp);
    io::write_f64(os, s.lambda_nodes);
    io::write_f64(os, s.lambda_scale);
    io::write_f64(os, s.omega_nodes);
    io::write_f64(os, s.data);
    if (!os) throw IoError("write failed for '" + path.string() + "'");
    os.close();
    auto side = path;
    side += ".json";
    io::write_json(side, sinogram_header_json(s));
}

inline Sinogram read_sinogram(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    std::array<char, 64> raw{};
    is.read(raw.data(), 64);
    if (is.gcount() != 64) throw IoError("truncated sinogram header in '" + path.string() + "'");
    io::Header64 h(raw);
    if (!h.has_magic("FXSG")) throw IoError("'" + path.string() + "' is not an FXSG sinogram");
    if (h.get<std::uint32_t>(4) != kSinogramVersion) throw IoError("unsupported sinogram version");
    Sinogram s;
    const std::size_t nb = h.get<std::uint32_t>(8), nl = h.get<std::uint32_t>(12), nw = h.get<std::uint32_t>(16);
    s.geometry_hash = h.get<std::uint64_t>(24);
    const auto bp = io::read_f64(is, 3 * nb, "base points");
    for (std::size_t i = 0; i < nb; ++i) s.base_points.emplace_back(bp[3 * i], bp[3 * i + 1], bp[3 * i + 2]);
    s.lambda_nodes = io::read_f64(is, nl, "lambda nodes");
    s.lambda_scale = io::read_f64(is, nb, "lambda scales");
    s.omega_nodes = io::read_f64(is, nw, "omega nodes");
    s.data = io::read_f64(is, nb * nl * nw, "sinogram data");
    try {
        s.check_consistent();
    } catch (const ArgumentError& e) {
        throw IoError(std::string("corrupt sinogram: ") + e.what());
    }
    return s;
}

} // namespace folxray
