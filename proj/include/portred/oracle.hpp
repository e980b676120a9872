#pragma once

#include "portred/types.hpp"

#include <cmath>
#include <numbers>

namespace portred::oracle {

/// Two Laplace components of height H and length L each, Neumann on top and bottom,
/// outer ports at x1 = -L and x1 = L, shared port at x1 = 0.
struct AnalyticConfig {
    double height = 1.0;
    double length = 1.0;
};

inline double separation_constant(const AnalyticConfig& cfg, int j) { return j * std::numbers::pi / cfg.height; }

/// lambda_j = cosh(L sigma_{j-1})^{-2}, j = 1..count. lambda_1 = 1 belongs to the constant mode.
inline std::vector<double> analytic_eigenvalues(const AnalyticConfig& cfg, int count)
{
    if (!(cfg.height > 0.0) || !(cfg.length > 0.0)) throw Error("analytic config needs H, L > 0");
    if (count < 1) throw Error("analytic_eigenvalues: count must be >= 1");
    std::vector<double> out;
    for (int j = 1; j <= count; ++j) {
        const double c = std::cosh(cfg.length * separation_constant(cfg, j - 1));
        out.push_back(1.0 / (c * c));
    }
    return out;
}

/// Port modes cos(k pi x2 / H), k = 1..count, sampled at the given heights (relative to the bottom).
inline Matrix analytic_modes(const AnalyticConfig& cfg, int count, const std::vector<double>& x2)
{
    Matrix m(static_cast<Eigen::Index>(x2.size()), count);
    for (std::size_t i = 0; i < x2.size(); ++i)
        for (int k = 1; k <= count; ++k) m(static_cast<Eigen::Index>(i), k - 1) = std::cos(separation_constant(cfg, k) * x2[i]);
    return m;
}

/// Local solution with data c cos(n pi x2/H) on both outer ports.
inline double symmetric_cosine_solution(const AnalyticConfig& cfg, int n, double amplitude, double x1, double x2)
{
    const double s = separation_constant(cfg, n);
    return amplitude * std::cos(s * x2) * std::cosh(s * x1) / std::cosh(s * cfg.length);
}

}  // namespace portred::oracle
