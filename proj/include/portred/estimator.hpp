#pragma once

#include "portred/condense.hpp"

#include <optional>

namespace portred {

/// Extends an M-orthonormal Phi_m to a full M-orthonormal frame of R^{N_in}. The first m
/// columns are Phi_m unchanged.
inline Matrix complete_port_frame(const Matrix& phi_m, const Matrix& metric)
{
    const Eigen::Index n = metric.rows();
    if (phi_m.rows() != n) throw Error("port basis does not match the metric size");
    if (phi_m.cols() > n) throw Error("port basis has more columns than port DOFs");
    Eigen::LLT<Matrix> llt(metric);
    if (llt.info() != Eigen::Success) throw Error("port metric is not positive definite");
    const Matrix lt = llt.matrixU();  // metric = lt^T lt
    // Euclidean-orthonormal image of phi_m, completed by Householder QR
    const Matrix q_m = lt * phi_m;
    Eigen::HouseholderQR<Matrix> qr(q_m);
    const Matrix q = qr.householderQ();
    const Matrix complement = lt.triangularView<Eigen::Upper>().solve(q.rightCols(n - phi_m.cols()));
    Matrix frame(n, n);
    frame << phi_m, complement;
    return frame;
}

/// Coefficients of the conservative flux jump in a full L2-orthonormal port frame.
struct FluxJump {
    Vector coefficients;  // N_in; the first m vanish up to roundoff
    double norm = 0.0;    // L2(Gamma_in) norm of the jump
    int m = 0;
};

/// zeta = Phi_N^T (f_SC - A_SC u_port).
inline FluxJump flux_jump(const SchurSystem& s, const Matrix& frame, int m, const Vector& port_solution)
{
    if (frame.rows() != s.port_dofs() || frame.cols() != s.port_dofs()) throw Error("flux jump needs a full port frame");
    const Vector residual = s.schur_rhs - s.schur_matrix * port_solution;
    FluxJump jump;
    jump.coefficients = frame.transpose() * residual;
    jump.norm = jump.coefficients.norm();
    jump.m = m;
    return jump;
}

/// Frame-free L2 norm of the functional represented by a residual vector: sqrt(r^T M^{-1} r).
inline double residual_dual_norm(const Vector& residual, const Matrix& metric)
{
    Eigen::LLT<Matrix> llt(metric);
    if (llt.info() != Eigen::Success) throw Error("port metric is not positive definite");
    return std::sqrt(std::max(0.0, residual.dot(llt.solve(residual))));
}

/// Constants of the lower (effectivity) bound.
struct EffectivityConstants {
    double gamma_h = 0.0;  // continuity constant of the bilinear form in H1
    double c_h = 0.0;      // inverse inequality constant: sqrt(lambda_max(S_G, M)) = c_h h^{-1/2}
    double c_a = 0.0;      // operator-harmonic vs H1-harmonic extension
    double h = 0.0;        // port mesh size
};

struct EstimatorConstants {
    std::vector<double> trace;  // discrete trace constant per component
    double poincare = 0.0;
    double alpha_h = 0.0;
    double alpha_app = 0.0;
    std::optional<EffectivityConstants> effectivity;

    [[nodiscard]] double trace_max() const
    {
        if (trace.empty()) throw Error("estimator constants carry no trace constant");
        return *std::max_element(trace.begin(), trace.end());
    }

    /// max_i c_t,i sqrt(1 + c_p^2) / alpha_app
    [[nodiscard]] double prefactor() const
    {
        if (!(alpha_app > 0.0) || !(poincare > 0.0)) throw Error("estimator constants must be positive");
        for (double c : trace)
            if (!(c > 0.0)) throw Error("estimator constants must be positive");
        return trace_max() * std::sqrt(1.0 + poincare * poincare) / alpha_app;
    }

    /// Upper bound of Delta / ||grad e||, available after an effectivity study.
    [[nodiscard]] double effectivity_bound() const
    {
        if (!effectivity) throw Error("effectivity constants were not computed");
        const auto& e = *effectivity;
        return prefactor() * e.gamma_h * e.c_a * (e.c_h / std::sqrt(e.h)) * std::sqrt(1.0 + poincare * poincare);
    }
};

inline double estimate(double jump_norm, const EstimatorConstants& consts)
{
    if (jump_norm < 0.0) throw Error("flux jump norm must be nonnegative");
    return consts.prefactor() * jump_norm;
}

inline double estimate(const FluxJump& jump, const EstimatorConstants& consts) { return estimate(jump.norm, consts); }

struct GlobalEstimate {
    double delta = 0.0;
    std::vector<double> indicators;  // per port, same scaling as delta
};

inline GlobalEstimate estimate_global(const std::vector<double>& jump_norms, const EstimatorConstants& consts)
{
    GlobalEstimate out;
    const double pre = consts.prefactor();
    double sum = 0.0;
    for (double z : jump_norms) {
        if (z < 0.0) throw Error("flux jump norm must be nonnegative");
        out.indicators.push_back(pre * z);
        sum += z * z;
    }
    out.delta = pre * std::sqrt(sum);
    return out;
}

/// Gradient L2 error sqrt(e^T G e), G the blocked gradient Gram matrix.
inline double gradient_error(const Vector& full, const Vector& reduced, const SparseMatrix& gradient_gram)
{
    const Vector e = full - reduced;
    return std::sqrt(std::max(0.0, e.dot(gradient_gram * e)));
}

namespace detail {

inline IndexList set_difference(IndexList a, IndexList b)
{
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    IndexList out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

/// Dense Schur complement of `g` onto `trace`, eliminating `interior`.
inline Matrix schur_onto(const SparseMatrix& g, const IndexList& trace, const IndexList& interior)
{
    Matrix s = Matrix(sparse_block(g, trace, trace));
    if (!interior.empty()) {
        const auto factor = factorize(sparse_block(g, interior, interior));
        const SparseMatrix coupling = sparse_block(g, interior, trace);
        s -= coupling.transpose() * factor->solve(Matrix(coupling));
    }
    return 0.5 * (s + s.transpose());
}

/// sup over discrete v on the patch of ||v||_{L2(trace)} / ||v||_{H1(patch)}; `patch_dofs`
/// excludes DOFs held at zero.
inline double trace_constant(const SparseMatrix& h1_gram, const IndexList& patch_dofs, const IndexList& trace_dofs,
                             const Matrix& trace_mass)
{
    const Matrix s = schur_onto(h1_gram, trace_dofs, set_difference(patch_dofs, trace_dofs));
    return std::sqrt(generalized_eigs_descending(trace_mass, s).values(0));
}

/// Largest eigenvalue of the element pencils (K_e, G_e); bounds the global one from above.
inline double elementwise_continuity(const ComponentMesh& mesh, const OperatorSpec& op)
{
    const int dpn = op.dofs_per_node();
    double worst = 0.0;
    for (const auto& nodes : mesh.elements) {
        const Matrix k = element_stiffness(mesh, nodes, op);
        Matrix g = Matrix::Zero(4 * dpn, 4 * dpn);
        const Matrix grad = element_stiffness(mesh, nodes, laplace_operator());
        for (const auto& qp : q1_quadrature(mesh, nodes))
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    for (int c = 0; c < dpn; ++c)
                        g(a * dpn + c, b * dpn + c) +=
                            qp.weight * qp.shape[static_cast<std::size_t>(a)] * qp.shape[static_cast<std::size_t>(b)];
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                for (int c = 0; c < dpn; ++c) g(a * dpn + c, b * dpn + c) += grad(a, b);
        worst = std::max(worst, generalized_eigs_descending(k, g).values(0));
    }
    return worst;
}

inline double max_segment(const ComponentMesh& mesh, const IndexList& edge)
{
    double h = 0.0;
    for (std::size_t s = 0; s + 1 < edge.size(); ++s) {
        const Point& p = mesh.nodes[static_cast<std::size_t>(edge[s])];
        const Point& q = mesh.nodes[static_cast<std::size_t>(edge[s + 1])];
        h = std::max(h, std::hypot(q[0] - p[0], q[1] - p[1]));
    }
    return h;
}

/// Poincare constant, coercivity and (optionally) effectivity constants on the DOF set `free`.
/// `trace_dofs`/`trace_mass` describe one port used for the effectivity constants.
inline void global_constants(const ComponentMesh& mesh, const OperatorSpec& op, const IndexList& free,
                             const IndexList& trace_dofs, const Matrix& trace_mass, double trace_h, bool effectivity,
                             double safety, EstimatorConstants& out)
{
    const int dpn = op.dofs_per_node();
    const SparseMatrix stiffness = assemble_stiffness(mesh, op);
    const SparseMatrix mass = assemble_mass(mesh, dpn);
    const SparseMatrix grad = assemble_gradient_gram(mesh, dpn);
    const SparseMatrix h1 = SparseMatrix(grad + mass);

    const SparseMatrix grad_free = sparse_block(grad, free, free);
    const SparseMatrix mass_free = sparse_block(mass, free, free);
    const double lambda_p = smallest_generalized_eigs(grad_free, mass_free, 1).values(0);
    if (!(lambda_p > 0.0)) throw Error("Poincare eigenproblem returned a nonpositive eigenvalue");
    out.poincare = 1.0 / std::sqrt(lambda_p);

    const SparseMatrix a_free = sparse_block(stiffness, free, free);
    const SparseMatrix h1_free = sparse_block(h1, free, free);
    out.alpha_h = smallest_generalized_eigs(a_free, h1_free, 1).values(0);
    if (!(out.alpha_h > 0.0)) throw Error("coercivity eigenproblem returned a nonpositive eigenvalue");
    out.alpha_app = safety * out.alpha_h;

    if (!effectivity) return;
    EffectivityConstants e;
    e.gamma_h = elementwise_continuity(mesh, op);
    e.h = trace_h;
    const IndexList interior = set_difference(free, trace_dofs);
    const Matrix s_g = schur_onto(h1, trace_dofs, interior);
    e.c_h = std::sqrt(generalized_eigs_descending(s_g, trace_mass).values(0) * trace_h);
    // operator-harmonic extension E_A = [-A_ii^{-1} A_it; I] measured in the H1 Gram
    const auto factor = factorize(sparse_block(stiffness, interior, interior));
    const Matrix x = -factor->solve(Matrix(sparse_block(stiffness, interior, trace_dofs)));
    const SparseMatrix g_ii = sparse_block(h1, interior, interior);
    const SparseMatrix g_it = sparse_block(h1, interior, trace_dofs);
    const Matrix g_tt = Matrix(sparse_block(h1, trace_dofs, trace_dofs));
    Matrix energy = x.transpose() * (g_ii * x);
    const Matrix cross = Matrix(g_it.transpose()) * x;
    energy += cross + cross.transpose() + g_tt;
    e.c_a = std::sqrt(generalized_eigs_descending(energy, s_g).values(0));
    out.effectivity = e;
}

}  // namespace detail

/// Numerically computed estimator constants for a component pair with Dirichlet data on
/// Gamma_out. `safety` sets alpha_app = safety * alpha_h.
inline EstimatorConstants compute_constants(const ComponentPairMesh& pair, const OperatorSpec& op, bool effectivity = false,
                                            double safety = 0.99)
{
    if (!(safety > 0.0) || safety > 1.0) throw Error("coercivity safety factor must lie in (0, 1]");
    const int dpn = op.dofs_per_node();
    const auto part = pair.partition(dpn);
    const Matrix m_gamma = edge_mass(pair.mesh(), pair.gamma_in_nodes(), dpn);
    EstimatorConstants out;
    const auto& owner = pair.chain.element_owner;
    for (int c = 0; c < 2; ++c) {
        std::vector<int> elements;
        for (int e = 0; e < static_cast<int>(owner.size()); ++e)
            if (owner[static_cast<std::size_t>(e)] == c) elements.push_back(e);
        const SparseMatrix h1 = assemble_h1_gram(pair.mesh(), dpn, elements);
        const IndexList patch =
            detail::set_difference(node_dofs(pair.chain.component_nodes[static_cast<std::size_t>(c)], dpn), part.constrained());
        out.trace.push_back(detail::trace_constant(h1, patch, part.gamma_in, m_gamma));
    }
    detail::global_constants(pair.mesh(), op, part.free(), part.gamma_in, m_gamma,
                             detail::max_segment(pair.mesh(), pair.gamma_in_nodes()), effectivity, safety, out);
    return out;
}

}  // namespace portred
