#pragma once

#include "portred/condense.hpp"

#include <optional>

namespace portred {

/// L2 metric of the outer ports, averaged over the two outer port edges.
inline Matrix source_metric(const ComponentPairMesh& pair, int dofs_per_node)
{
    const Matrix left = edge_mass(pair.mesh(), pair.chain.edges.front(), dofs_per_node);
    const Matrix right = edge_mass(pair.mesh(), pair.chain.edges.back(), dofs_per_node);
    return 0.5 * block_diagonal({left, right});
}

/// Homogeneous system on the pair: zero load, zero data on Gamma_out and Sigma_D.
inline AssembledSystem homogeneous_system(const ComponentPairMesh& pair, const OperatorSpec& op)
{
    std::map<int, double> zero;
    for (int d : pair.partition(op.dofs_per_node()).constrained()) zero[d] = 0.0;
    return assemble(pair, op, nullptr, zero);
}

/// Port inner product on Gamma_in: the 1D L2 mass matrix, or the lifting Gram matrix whose
/// entries are energies of discrete extensions with zero data on Gamma_out.
inline Matrix build_range_metric(PortMetricKind kind, const ComponentPairMesh& pair, const OperatorSpec& op)
{
    switch (kind) {
    case PortMetricKind::l2: return edge_mass(pair.mesh(), pair.gamma_in_nodes(), op.dofs_per_node());
    case PortMetricKind::lifting: {
        const auto sys = homogeneous_system(pair, op);
        return condense(sys, pair.partition(op.dofs_per_node())).schur_matrix;
    }
    default: throw Error("range metric kind must be l2 or lifting");
    }
}

/// Everything the matrix form of the transfer operator needs, for one pair geometry.
struct TransferContext {
    ComponentPairMesh pair;
    OperatorSpec op;
    DofPartition partition;
    SparseMatrix raw_stiffness;
    SparseMatrix mass;
    Matrix kernel;                     // N x dim ker
    Matrix mass_kernel;                // M * kernel
    Eigen::LDLT<Matrix> kernel_gram;   // kernel^T M kernel
    IndexList free_dofs;               // omega1, omega2, gamma_in
    IndexList outer_dofs;              // gamma_out
    std::shared_ptr<const Factorization> free_factor;
    SparseMatrix free_outer;           // A(free, gamma_out)
    Matrix source_metric;              // M_S
    Matrix range_metric;               // M_R
    PortMetricKind range_kind = PortMetricKind::l2;

    [[nodiscard]] int port_dofs() const { return static_cast<int>(partition.gamma_in.size()); }
    [[nodiscard]] int outer_dofs_count() const { return static_cast<int>(partition.gamma_out.size()); }
};

inline TransferContext make_transfer_context(const ComponentPairMesh& pair, const OperatorSpec& op,
                                             PortMetricKind range_kind = PortMetricKind::lifting)
{
    TransferContext ctx;
    ctx.pair = pair;
    ctx.op = op;
    const int dpn = op.dofs_per_node();
    ctx.partition = pair.partition(dpn);
    ctx.raw_stiffness = assemble_stiffness(pair.mesh(), op);
    ctx.mass = assemble_mass(pair.mesh(), dpn);
    ctx.kernel = kernel_basis(pair.mesh(), op);
    ctx.mass_kernel = ctx.mass * ctx.kernel;
    ctx.kernel_gram.compute(ctx.kernel.transpose() * ctx.mass_kernel);
    ctx.free_dofs = ctx.partition.free();
    ctx.outer_dofs = ctx.partition.gamma_out;
    ctx.free_factor = detail::factorize(sparse_block(ctx.raw_stiffness, ctx.free_dofs, ctx.free_dofs));
    ctx.free_outer = sparse_block(ctx.raw_stiffness, ctx.free_dofs, ctx.outer_dofs);
    ctx.source_metric = source_metric(pair, dpn);
    ctx.range_kind = range_kind;
    ctx.range_metric = build_range_metric(range_kind, pair, op);
    return ctx;
}

namespace detail {

/// Local solutions for the columns of `outer_data` (Dirichlet data on Gamma_out, zero on Sigma_D).
inline Matrix local_solutions(const TransferContext& ctx, const Matrix& outer_data)
{
    const Matrix interior = -ctx.free_factor->solve(Matrix(ctx.free_outer * outer_data));
    Matrix u = Matrix::Zero(ctx.partition.num_dofs, outer_data.cols());
    for (std::size_t k = 0; k < ctx.free_dofs.size(); ++k) u.row(ctx.free_dofs[k]) = interior.row(static_cast<Eigen::Index>(k));
    for (std::size_t k = 0; k < ctx.outer_dofs.size(); ++k) u.row(ctx.outer_dofs[k]) = outer_data.row(static_cast<Eigen::Index>(k));
    return u;
}

/// (1 - K_Omega) u restricted to Gamma_in, K_Omega the L2(Omega)-orthogonal kernel projection.
inline Matrix kernel_free_port_trace(const TransferContext& ctx, const Matrix& u)
{
    const Matrix coeffs = ctx.kernel_gram.solve(Matrix(ctx.mass_kernel.transpose() * u));
    const Matrix w = u - ctx.kernel * coeffs;
    return gather_rows(w, ctx.partition.gamma_in);
}

}  // namespace detail

inline Vector apply_transfer(const TransferContext& ctx, const Vector& outer_data)
{
    if (outer_data.size() != ctx.outer_dofs_count()) throw Error("transfer input must live on Gamma_out");
    return detail::kernel_free_port_trace(ctx, detail::local_solutions(ctx, outer_data));
}

/// Matrix of the transfer operator, one local solve per unit vector on Gamma_out.
inline Matrix transfer_matrix(const TransferContext& ctx)
{
    const Matrix unit = Matrix::Identity(ctx.outer_dofs_count(), ctx.outer_dofs_count());
    return detail::kernel_free_port_trace(ctx, detail::local_solutions(ctx, unit));
}

struct TransferEigs {
    Vector values;          // descending, clamped at zero
    Matrix source_vectors;  // M_S-normalized eigenvectors on Gamma_out
    Matrix modes;           // port modes T * source_vectors; ||mode_j||^2_{M_R} = values_j
    PortMetricKind range_kind = PortMetricKind::l2;

    [[nodiscard]] int count() const { return static_cast<int>(values.size()); }
};

/// Transfer eigenproblem T^T M_R T z = lambda M_S z. `count` < 0 keeps all eigenpairs.
inline TransferEigs transfer_eigs(const TransferContext& ctx, int count = -1, int dense_limit = 4000)
{
    if (ctx.outer_dofs_count() > dense_limit)
        throw Error("Gamma_out has " + std::to_string(ctx.outer_dofs_count()) + " DOFs, above the dense eigensolver limit of " +
                    std::to_string(dense_limit) + "; use a coarser mesh");
    const Matrix t = transfer_matrix(ctx);
    const Matrix gram = t.transpose() * ctx.range_metric * t;
    auto eig = generalized_eigs_descending(gram, ctx.source_metric);
    const double top = std::max(eig.values(0), 0.0);
    for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
        if (eig.values(k) < 1e-14 * top) eig.values(k) = 0.0;
    }
    const int keep = count < 0 ? static_cast<int>(eig.values.size()) : std::min<int>(count, static_cast<int>(eig.values.size()));
    TransferEigs out;
    out.values = eig.values.head(keep);
    out.source_vectors = eig.vectors.leftCols(keep);
    out.modes = t * out.source_vectors;
    out.range_kind = ctx.range_kind;
    return out;
}

/// Kernel functions restricted to Gamma_in.
inline Matrix kernel_traces(const TransferContext& ctx) { return gather_rows(ctx.kernel, ctx.partition.gamma_in); }

/// Trace on Gamma_in of the solution with body load `source` and zero data on Gamma_out.
inline Vector data_mode(const TransferContext& ctx, const LoadFunction& source)
{
    const Vector f = assemble_load(ctx.pair.mesh(), ctx.op, source);
    const Vector f_free = gather(f, ctx.free_dofs);
    const Vector u_free = ctx.free_factor->solve(f_free);
    Vector u = Vector::Zero(ctx.partition.num_dofs);
    scatter(u_free, ctx.free_dofs, u);
    return gather(u, ctx.partition.gamma_in);
}

inline Vector data_mode(const ComponentPairMesh& pair, const OperatorSpec& op, const LoadFunction& source)
{
    return data_mode(make_transfer_context(pair, op, PortMetricKind::l2), source);
}

/// Optimal port space span{kernel traces, data mode, phi_1..phi_n}, orthonormalized in
/// `metric` in that order. Numerically dependent columns are dropped.
inline PortSpace optimal_space(const TransferEigs& eigs, const Matrix& kernel, const std::optional<Vector>& data, int n,
                               const Matrix& metric, PortMetricKind kind, int* dropped = nullptr)
{
    if (n < 0 || n > eigs.count()) throw Error("optimal_space: n exceeds the number of computed eigenpairs");
    const Eigen::Index rows = metric.rows();
    std::vector<PortMode> tags;
    Matrix cand(rows, kernel.cols() + (data ? 1 : 0) + n);
    Eigen::Index c = 0;
    for (Eigen::Index k = 0; k < kernel.cols(); ++k, ++c) {
        cand.col(c) = kernel.col(k);
        tags.push_back({ModeKind::kernel, 0.0});
    }
    if (data) {
        cand.col(c++) = *data;
        tags.push_back({ModeKind::data, 0.0});
    }
    for (int j = 0; j < n; ++j, ++c) {
        cand.col(c) = eigs.modes.col(j);
        tags.push_back({ModeKind::spectral, eigs.values(j)});
    }
    const auto ortho = orthonormalize(Matrix(rows, 0), cand, metric, 1e-10);
    PortSpace space;
    space.basis = ortho.basis;
    space.metric = kind;
    int lost = 0;
    for (std::size_t k = 0; k < tags.size(); ++k) {
        if (ortho.kept[k])
            space.modes.push_back(tags[k]);
        else
            ++lost;
    }
    if (dropped) *dropped = lost;
    return space;
}

inline PortSpace optimal_space(const TransferContext& ctx, const TransferEigs& eigs, const std::optional<Vector>& data, int n,
                               int* dropped = nullptr)
{
    return optimal_space(eigs, kernel_traces(ctx), data, n, ctx.range_metric, ctx.range_kind, dropped);
}

}  // namespace portred
