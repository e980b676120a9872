#pragma once

#include "portred/experiments.hpp"

#include <random>

namespace portred::testing {

/// Two rectangles (-L,0)x(0,H) and (0,L)x(0,H), each nx x ny elements.
inline ComponentPairMesh rect_pair(int nx, int ny, double length = 1.0, double height = 1.0, Defect right_defect = {})
{
    ComponentSpec a{{-length, 0.0}, length, height, nx, ny, {}};
    ComponentSpec b{{0.0, 0.0}, length, height, nx, ny, right_defect};
    return join_pair(build_component_mesh(a), build_component_mesh(b));
}

/// The beam pair Omega1 = (-7.5,-2.5)x(-0.5,0.5), Omega2 = (-2.5,2.5)x(-0.5,0.5).
inline ComponentSpec beam_left(int nx = 50, int ny = 10) { return {{-7.5, -0.5}, 5.0, 1.0, nx, ny, {}}; }
inline ComponentSpec beam_right(int nx = 50, int ny = 10, Defect d = {}) { return {{-2.5, -0.5}, 5.0, 1.0, nx, ny, d}; }

inline ComponentPairMesh beam_pair(Defect d = {}, int nx = 50, int ny = 10)
{
    return join_pair(build_component_mesh(beam_left(nx, ny)), build_component_mesh(beam_right(nx, ny, d)));
}

inline Crack center_crack() { return Crack{CrackEdge::top, 0.5, 0.5}; }
inline Crack shifted_crack() { return Crack{CrackEdge::top, 0.5, 0.3}; }
inline Hole center_hole() { return Hole{{0.5, 0.5}, {0.1, 0.1}}; }

/// Assembled system with random Gamma_out data.
inline AssembledSystem random_system(const ComponentPairMesh& pair, const OperatorSpec& op, std::uint64_t seed, int realization = 0)
{
    const auto part = pair.partition(op.dofs_per_node());
    const Vector g = experiments::random_data(static_cast<int>(part.gamma_out.size()), seed, realization, 5.0);
    return assemble(pair, op, nullptr, experiments::dirichlet_map(part, g));
}

/// Monolithic reference: dense LU of the constrained system, independent of the sparse path.
inline Vector dense_solve(const AssembledSystem& sys)
{
    const Matrix a = Matrix(sys.stiffness);
    return Eigen::FullPivLU<Matrix>(a).solve(sys.load);
}

inline double rel_diff(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

/// Projection error of v onto span(q) measured in `metric`, by a least-squares normal
/// equation solve (no orthonormality assumed).
inline double projection_error(const Matrix& q, const Vector& v, const Matrix& metric)
{
    if (q.cols() == 0) return std::sqrt(v.dot(metric * v));
    const Matrix g = q.transpose() * metric * q;
    const Vector c = g.ldlt().solve(q.transpose() * (metric * v));
    const Vector r = v - q * c;
    return std::sqrt(std::max(0.0, r.dot(metric * r)));
}

/// Monte-Carlo lower bound of sup_{|c| <= 1} || (1 - P) F c ||: samples on the unit sphere mixing
/// full-support Gaussian directions with random low-dimensional supports.
inline double monte_carlo_deviation(const Matrix& frame, const Matrix& basis, const Matrix& metric, int samples,
                                    std::uint64_t seed)
{
    const int d = static_cast<int>(frame.cols());
    if (d == 0) return 0.0;
    Matrix residual = frame;
    if (basis.cols() > 0) {
        for (Eigen::Index k = 0; k < frame.cols(); ++k) {
            const Matrix g = basis.transpose() * metric * basis;
            const Vector c = g.ldlt().solve(basis.transpose() * (metric * frame.col(k)));
            residual.col(k) = frame.col(k) - basis * c;
        }
    }
    const Matrix z = residual.transpose() * metric * residual;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<int> support_size(1, d);
    std::vector<int> idx(static_cast<std::size_t>(d));
    double best = 0.0;
    for (int s = 0; s < samples; ++s) {
        Vector c = Vector::Zero(d);
        if (s % 2 == 0) {
            for (int i = 0; i < d; ++i) c(i) = normal(rng);
        } else {
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), rng);
            const int k = support_size(rng);
            for (int i = 0; i < k; ++i) c(idx[static_cast<std::size_t>(i)]) = normal(rng);
        }
        const double nc = c.norm();
        if (nc == 0.0) continue;
        c /= nc;
        best = std::max(best, std::sqrt(std::max(0.0, c.dot(z * c))));
    }
    return best;
}

}  // namespace portred::testing
