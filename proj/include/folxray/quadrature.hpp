// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "folxray/core.hpp"

#include <vector>

namespace folxray {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const { return nodes.size(); }
};

/// Gauss-Legendre rule on [a, b] (Newton iteration on P_n, Chebyshev start).
inline QuadratureRule gauss_legendre(int n, double a, double b) {
    if (n < 1) throw ArgumentError("gauss_legendre needs n >= 1");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // recompute derivative at the converged node
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = mid - half * x;
        rule.nodes[n - 1 - i] = mid + half * x;
        rule.weights[i] = rule.weights[n - 1 - i] = half * w;
    }
    return rule;
}

/// Equispaced periodic rule on the circle: angles 2*pi*j/n, weights 2*pi/n.
inline QuadratureRule circle_rule(int n) {
    if (n < 1) throw ArgumentError("circle_rule needs n >= 1");
    QuadratureRule rule;
    for (int j = 0; j < n; ++j) {
        rule.nodes.push_back(2.0 * kPi * j / n);
        rule.weights.push_back(2.0 * kPi / n);
    }
    return rule;
}

/// Smooth plateau profile: 1 on [-1, 1], 0 outside [-2, 2], C^2 quintic
/// smoothstep in between.
inline double plateau(double s) {
    s = std::abs(s);
    if (s <= 1.0) return 1.0;
    if (s >= 2.0) return 0.0;
    const double u = s - 1.0;
    return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

} // namespace folxray
