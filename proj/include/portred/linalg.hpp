#pragma once

#include "portred/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>

namespace portred {

namespace detail {

inline std::vector<int> inverse_index(std::span<const int> idx, int n)
{
    std::vector<int> inv(static_cast<std::size_t>(n), -1);
    for (std::size_t k = 0; k < idx.size(); ++k) inv[static_cast<std::size_t>(idx[k])] = static_cast<int>(k);
    return inv;
}

}  // namespace detail

/// Sparse block A(rows, cols) with local numbering given by the order of the index lists.
inline SparseMatrix sparse_block(const SparseMatrix& a, std::span<const int> rows, std::span<const int> cols)
{
    const auto row_of = detail::inverse_index(rows, static_cast<int>(a.rows()));
    const auto col_of = detail::inverse_index(cols, static_cast<int>(a.cols()));
    std::vector<Triplet> trips;
    for (int k = 0; k < a.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
            const int r = row_of[static_cast<std::size_t>(it.row())];
            const int c = col_of[static_cast<std::size_t>(it.col())];
            if (r >= 0 && c >= 0) trips.emplace_back(r, c, it.value());
        }
    }
    SparseMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

inline Vector gather(const Vector& v, std::span<const int> idx)
{
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(idx[k]);
    return out;
}

inline void scatter(const Vector& values, std::span<const int> idx, Vector& target)
{
    for (std::size_t k = 0; k < idx.size(); ++k) target(idx[k]) = values(static_cast<Eigen::Index>(k));
}

inline Matrix gather_rows(const Matrix& m, std::span<const int> idx)
{
    Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(idx[k]);
    return out;
}

inline double m_norm(const Vector& v, const Matrix& metric) { return std::sqrt(std::max(0.0, v.dot(metric * v))); }

/// Eigenpairs sorted by descending eigenvalue.
struct EigenPairs {
    Vector values;
    Matrix vectors;
};

/// Dense symmetric-definite problem A x = lambda B x; vectors are B-normalized.
inline EigenPairs generalized_eigs_descending(const Matrix& a, const Matrix& b)
{
    const Matrix a_sym = 0.5 * (a + a.transpose());
    const Matrix b_sym = 0.5 * (b + b.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(a_sym, b_sym);
    if (solver.info() != Eigen::Success) throw Error("generalized symmetric eigensolver failed (is B positive definite?)");
    const Eigen::Index n = a.rows();
    EigenPairs out{Vector(n), Matrix(n, n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = solver.eigenvalues()(n - 1 - k);
        out.vectors.col(k) = solver.eigenvectors().col(n - 1 - k);
    }
    return out;
}

inline EigenPairs symmetric_eigs_descending(const Matrix& a)
{
    Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (a + a.transpose()));
    if (solver.info() != Eigen::Success) throw Error("symmetric eigensolver failed");
    const Eigen::Index n = a.rows();
    EigenPairs out{Vector(n), Matrix(n, n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = solver.eigenvalues()(n - 1 - k);
        out.vectors.col(k) = solver.eigenvectors().col(n - 1 - k);
    }
    return out;
}

/// Result of metric-weighted Gram-Schmidt: the extended basis and, per candidate, whether it was kept.
struct Orthonormalized {
    Matrix basis;
    std::vector<bool> kept;
};

/// Appends the candidates to an M-orthonormal basis by modified Gram-Schmidt with one
/// re-orthogonalization pass. A candidate is dropped when its post-projection norm falls
/// below drop_tol times its original norm.
inline Orthonormalized orthonormalize(const Matrix& basis, const Matrix& candidates, const Matrix& metric,
                                      double drop_tol = 1e-10)
{
    std::vector<Vector> cols;
    cols.reserve(static_cast<std::size_t>(basis.cols() + candidates.cols()));
    for (Eigen::Index k = 0; k < basis.cols(); ++k) cols.emplace_back(basis.col(k));
    std::vector<bool> kept;
    for (Eigen::Index c = 0; c < candidates.cols(); ++c) {
        Vector v = candidates.col(c);
        const double original = m_norm(v, metric);
        if (original == 0.0) {
            kept.push_back(false);
            continue;
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : cols) v -= q.dot(metric * v) * q;
        }
        const double remaining = m_norm(v, metric);
        if (remaining <= drop_tol * original) {
            kept.push_back(false);
            continue;
        }
        cols.emplace_back(v / remaining);
        kept.push_back(true);
    }
    Matrix out(candidates.rows() > 0 ? candidates.rows() : basis.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = cols[k];
    return {out, kept};
}

/// Projection of v onto span(basis), with basis M-orthonormal.
inline Vector m_project(const Matrix& basis, const Vector& v, const Matrix& metric)
{
    if (basis.cols() == 0) return Vector::Zero(v.size());
    return basis * (basis.transpose() * (metric * v));
}

/// Numerical dimension of span(columns) in the M inner product.
inline int numerical_rank(const Matrix& columns, const Matrix& metric, double rel_tol = 1e-8)
{
    if (columns.cols() == 0) return 0;
    const Matrix gram = columns.transpose() * metric * columns;
    const auto eig = symmetric_eigs_descending(gram);
    const double top = std::max(eig.values(0), 0.0);
    if (top == 0.0) return 0;
    int rank = 0;
    for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
        if (eig.values(k) > rel_tol * rel_tol * top) ++rank;
    }
    return rank;
}

/// Principal angles (radians, ascending) between span(a) and span(b) in the M inner product.
inline Vector principal_angles(const Matrix& a, const Matrix& b, const Matrix& metric)
{
    const auto qa = orthonormalize(Matrix(a.rows(), 0), a, metric).basis;
    const auto qb = orthonormalize(Matrix(b.rows(), 0), b, metric).basis;
    const Matrix cross = qa.transpose() * metric * qb;
    Eigen::JacobiSVD<Matrix> svd(cross);
    Vector angles = svd.singularValues().unaryExpr([](double s) { return std::acos(std::clamp(s, -1.0, 1.0)); });
    std::sort(angles.begin(), angles.end());
    return angles;
}

/// Smallest `count` eigenpairs of the sparse SPD pencil K x = lambda M x by subspace iteration
/// with Rayleigh-Ritz, using one sparse factorization of K.
inline EigenPairs smallest_generalized_eigs(const SparseMatrix& k, const SparseMatrix& m, int count,
                                            double tol = 1e-10, int max_iter = 1000)
{
    const Eigen::Index n = k.rows();
    if (n == 0) throw Error("empty eigenproblem");
    const int block = static_cast<int>(std::min<Eigen::Index>(n, count + 6));
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(k);
    if (ldlt.info() != Eigen::Success) throw Error("factorization of stiffness pencil failed");
    Matrix x(n, block);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < block; ++c) x(i, c) = std::cos(0.37 * static_cast<double>((i + 1) * (c + 1))) + 0.1 * (c == i % block);
    }
    Vector previous = Vector::Constant(count, std::numeric_limits<double>::infinity());
    EigenPairs ritz;
    for (int it = 0; it < max_iter; ++it) {
        Matrix y = ldlt.solve(Matrix(m * x));
        const Matrix kr = y.transpose() * (k * y);
        const Matrix mr = y.transpose() * (m * y);
        const auto small = generalized_eigs_descending(kr, mr);
        // ascending order
        const Eigen::Index b = small.values.size();
        ritz.values.resize(b);
        ritz.vectors.resize(b, b);
        for (Eigen::Index c = 0; c < b; ++c) {
            ritz.values(c) = small.values(b - 1 - c);
            ritz.vectors.col(c) = small.vectors.col(b - 1 - c);
        }
        x = y * ritz.vectors;
        const Vector current = ritz.values.head(count);
        const double change = ((current - previous).cwiseAbs().array() / current.cwiseAbs().array()).maxCoeff();
        previous = current;
        if (change < tol) break;
    }
    return {previous, x.leftCols(count)};
}

/// Largest eigenvalue of the sparse pencil K x = lambda M x (M SPD).
inline double largest_generalized_eig(const SparseMatrix& k, const SparseMatrix& m, double tol = 1e-10,
                                      int max_iter = 5000)
{
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(m);
    if (ldlt.info() != Eigen::Success) throw Error("factorization of mass pencil failed");
    const Eigen::Index n = k.rows();
    const int block = static_cast<int>(std::min<Eigen::Index>(n, 4));
    Matrix x(n, block);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < block; ++c) x(i, c) = std::sin(0.71 * static_cast<double>((i + 3) * (c + 2)));
    }
    double previous = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Matrix y = ldlt.solve(Matrix(k * x));
        const Matrix kr = y.transpose() * (k * y);
        const Matrix mr = y.transpose() * (m * y);
        const auto ritz = generalized_eigs_descending(kr, mr);
        x = y * ritz.vectors;
        const double current = ritz.values(0);
        if (it > 0 && std::abs(current - previous) <= tol * std::abs(current)) return current;
        previous = current;
    }
    return previous;
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw Error("spearman: need two equally sized samples of length >= 2");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < order.size();) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace portred
