#pragma once

#include "portred/fem.hpp"

#include <memory>

namespace portred {

enum class PortMetricKind { none, l2, lifting };

inline const char* to_string(PortMetricKind k)
{
    switch (k) {
    case PortMetricKind::l2: return "l2";
    case PortMetricKind::lifting: return "lifting";
    default: return "none";
    }
}

enum class ModeKind { kernel, data, spectral, greedy, complement };

inline const char* to_string(ModeKind k)
{
    switch (k) {
    case ModeKind::kernel: return "kernel";
    case ModeKind::data: return "data";
    case ModeKind::spectral: return "spectral";
    case ModeKind::greedy: return "greedy";
    default: return "complement";
    }
}

struct PortMode {
    ModeKind kind = ModeKind::spectral;
    double value = 0.0;  // transfer eigenvalue for spectral modes, selection deviation for greedy ones
};

/// Reduced port basis (N_in x m). When `metric` is set the columns are orthonormal in it.
struct PortSpace {
    Matrix basis;
    std::vector<PortMode> modes;
    PortMetricKind metric = PortMetricKind::none;

    [[nodiscard]] int dim() const { return static_cast<int>(basis.cols()); }
    [[nodiscard]] int port_dofs() const { return static_cast<int>(basis.rows()); }

    /// The first m columns (nested sub-space).
    [[nodiscard]] PortSpace leading(int m) const
    {
        if (m < 0 || m > dim()) throw Error("requested more port modes than the space holds");
        PortSpace out{basis.leftCols(m), {modes.begin(), modes.begin() + m}, metric};
        return out;
    }
};

using Factorization = Eigen::SimplicialLDLT<SparseMatrix>;

struct InteriorBlock {
    IndexList dofs;
    std::shared_ptr<const Factorization> factor;  // empty when the component has no interior DOFs
    SparseMatrix coupling;                        // A(interior, gamma_in)
    Vector load;                                  // f on the interior DOFs
};

/// Condensed system on Gamma_in together with what is needed to recover interior DOFs.
struct SchurSystem {
    Matrix schur_matrix;
    Vector schur_rhs;
    Vector port_load;  // f on gamma_in
    std::array<InteriorBlock, 2> interiors;
    DofPartition partition;
    std::map<int, double> dirichlet_values;

    [[nodiscard]] int port_dofs() const { return static_cast<int>(schur_matrix.rows()); }
};

namespace detail {

inline std::shared_ptr<const Factorization> factorize(const SparseMatrix& a)
{
    auto f = std::make_shared<Factorization>(a);
    if (f->info() != Eigen::Success) throw Error("interior factorization failed");
    const Vector d = f->vectorD().cwiseAbs();
    if (d.size() > 0 && d.minCoeff() <= 1e-12 * d.maxCoeff())
        throw Error("singular interior block: the component is not closed by Dirichlet data on its ports");
    return f;
}

inline Vector schur_rhs(const Vector& port_load, const std::array<InteriorBlock, 2>& interiors)
{
    Vector rhs = port_load;
    for (const auto& blk : interiors) {
        if (blk.dofs.empty()) continue;
        rhs -= blk.coupling.transpose() * blk.factor->solve(blk.load);
    }
    return rhs;
}

}  // namespace detail

/// Static condensation onto Gamma_in. Gamma_out must already be eliminated (Dirichlet rows and
/// columns decoupled), as `assemble` does.
inline SchurSystem condense(const AssembledSystem& sys, const DofPartition& part)
{
    if (sys.stiffness.rows() != part.num_dofs) throw Error("partition does not match the system size");
    const SparseMatrix& a = sys.stiffness;
    if (!part.omega1.empty() && !part.omega2.empty()) {
        SparseMatrix cross = sparse_block(a, part.omega1, part.omega2);
        cross.prune(0.0);
        if (cross.nonZeros() != 0) throw Error("interiors of the two components are coupled; partition is inconsistent");
    }
    SchurSystem s;
    s.partition = part;
    s.dirichlet_values = sys.dirichlet_values;
    s.schur_matrix = Matrix(sparse_block(a, part.gamma_in, part.gamma_in));
    s.port_load = gather(sys.load, part.gamma_in);
    const IndexList* sets[2] = {&part.omega1, &part.omega2};
    for (int i = 0; i < 2; ++i) {
        InteriorBlock& blk = s.interiors[static_cast<std::size_t>(i)];
        blk.dofs = *sets[i];
        if (blk.dofs.empty()) continue;
        blk.factor = detail::factorize(sparse_block(a, blk.dofs, blk.dofs));
        blk.coupling = sparse_block(a, blk.dofs, part.gamma_in);
        blk.load = gather(sys.load, blk.dofs);
        const Matrix x = blk.factor->solve(Matrix(blk.coupling));
        s.schur_matrix -= blk.coupling.transpose() * x;
    }
    s.schur_matrix = 0.5 * (s.schur_matrix + s.schur_matrix.transpose()).eval();
    s.schur_rhs = detail::schur_rhs(s.port_load, s.interiors);
    return s;
}

/// Same condensed operator with the load of another system on the same pair (new Dirichlet
/// data or source); reuses the interior factorizations.
inline SchurSystem recondense_rhs(const SchurSystem& s, const AssembledSystem& sys)
{
    SchurSystem out = s;
    out.dirichlet_values = sys.dirichlet_values;
    out.port_load = gather(sys.load, s.partition.gamma_in);
    for (auto& blk : out.interiors) {
        if (!blk.dofs.empty()) blk.load = gather(sys.load, blk.dofs);
    }
    out.schur_rhs = detail::schur_rhs(out.port_load, out.interiors);
    return out;
}

/// Full FE vector from port values: Dirichlet data, the port vector, interiors by local solves.
inline Vector reconstruct(const SchurSystem& s, const Vector& port)
{
    Vector full = Vector::Zero(s.partition.num_dofs);
    for (const auto& [dof, value] : s.dirichlet_values) full(dof) = value;
    scatter(port, s.partition.gamma_in, full);
    for (const auto& blk : s.interiors) {
        if (blk.dofs.empty()) continue;
        scatter(blk.factor->solve(Vector(blk.load - blk.coupling * port)), blk.dofs, full);
    }
    return full;
}

struct PortSolution {
    Vector coefficients;
    Vector port;
    Vector full;
};

inline PortSolution solve_full_port(const SchurSystem& s)
{
    Eigen::LLT<Matrix> llt(s.schur_matrix);
    if (llt.info() != Eigen::Success) throw Error("Schur complement is not positive definite");
    PortSolution out;
    out.port = llt.solve(s.schur_rhs);
    out.coefficients = out.port;
    out.full = reconstruct(s, out.port);
    return out;
}

/// Galerkin solve in span(basis): (B^T A_SC B) c = B^T f_SC.
inline PortSolution solve_reduced(const SchurSystem& s, const Matrix& basis)
{
    if (basis.rows() != s.port_dofs()) throw Error("port basis does not match the number of port DOFs");
    if (basis.cols() > basis.rows()) throw Error("port basis has more columns than port DOFs");
    PortSolution out;
    if (basis.cols() == 0) {
        out.coefficients = Vector(0);
        out.port = Vector::Zero(s.port_dofs());
        out.full = reconstruct(s, out.port);
        return out;
    }
    const Matrix reduced = basis.transpose() * s.schur_matrix * basis;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (reduced + reduced.transpose()));
    const Vector& ev = eig.eigenvalues();
    if (!(ev(0) > 1e-13 * std::abs(ev(ev.size() - 1))))
        throw Error("reduced Schur matrix is rank deficient: port basis columns are linearly dependent");
    const Vector rhs = basis.transpose() * s.schur_rhs;
    out.coefficients = eig.eigenvectors() * (eig.eigenvectors().transpose() * rhs).cwiseQuotient(ev);
    out.port = basis * out.coefficients;
    out.full = reconstruct(s, out.port);
    return out;
}

inline PortSolution solve_reduced(const SchurSystem& s, const PortSpace& space) { return solve_reduced(s, space.basis); }

/// Relative energy-norm error ||u - u_m||_E / ||u||_E with the energy of the unconstrained operator.
inline double energy_error(const Vector& full, const Vector& reduced, const SparseMatrix& raw_stiffness)
{
    const Vector e = full - reduced;
    const double ref = full.dot(raw_stiffness * full);
    if (!(ref > 0.0)) throw Error("energy_error: reference solution has zero energy");
    return std::sqrt(std::max(0.0, e.dot(raw_stiffness * e)) / ref);
}

inline double energy_error(const Vector& full, const Vector& reduced, const AssembledSystem& sys)
{
    return energy_error(full, reduced, sys.raw_stiffness);
}

}  // namespace portred
