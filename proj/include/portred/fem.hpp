#pragma once

#include "portred/geometry.hpp"
#include "portred/linalg.hpp"

#include <functional>
#include <map>
#include <span>

namespace portred {

enum class OperatorKind { laplace, elasticity_plane_stress };

struct OperatorSpec {
    OperatorKind kind = OperatorKind::laplace;
    double poisson_ratio = 0.3;

    [[nodiscard]] int dofs_per_node() const { return kind == OperatorKind::laplace ? 1 : 2; }
    [[nodiscard]] int kernel_dim() const { return kind == OperatorKind::laplace ? 1 : 3; }
};

inline OperatorSpec laplace_operator() { return {OperatorKind::laplace, 0.3}; }
inline OperatorSpec elasticity_operator(double nu = 0.3) { return {OperatorKind::elasticity_plane_stress, nu}; }

inline OperatorSpec operator_from_name(const std::string& name)
{
    if (name == "laplace") return laplace_operator();
    if (name == "elasticity" || name == "elasticity_plane_stress") return elasticity_operator();
    throw Error("unknown operator '" + name + "' (expected laplace or elasticity)");
}

inline const char* to_string(OperatorKind k) { return k == OperatorKind::laplace ? "laplace" : "elasticity"; }

/// Plane-stress stiffness tensor C_ijkl for unit Young's modulus, stored at [((i*2+j)*2+k)*2+l].
inline std::array<double, 16> plane_stress_tensor(double nu)
{
    if (!(nu > -1.0 && nu < 0.5)) throw Error("poisson_ratio must lie in (-1, 0.5)");
    const double lame = nu / (1.0 - nu * nu);
    const double shear = 1.0 / (2.0 * (1.0 + nu));
    auto delta = [](int a, int b) { return a == b ? 1.0 : 0.0; };
    std::array<double, 16> c{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l)
                    c[static_cast<std::size_t>(((i * 2 + j) * 2 + k) * 2 + l)] =
                        lame * delta(i, j) * delta(k, l) + shear * (delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k));
    return c;
}

/// Body load returning one value per vector component (Laplace reads the first).
using LoadFunction = std::function<std::array<double, 2>(const Point&)>;

namespace detail {

struct QuadraturePoint {
    std::array<double, 4> shape;
    std::array<std::array<double, 2>, 4> grad;  // physical gradients
    double weight;                              // Gauss weight times |J|
    Point x;
};

/// 2x2 Gauss rule on one Q1 element.
inline std::array<QuadraturePoint, 4> q1_quadrature(const ComponentMesh& mesh, const std::array<int, 4>& e)
{
    static constexpr double ref[4][2] = {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};
    const double g = 1.0 / std::sqrt(3.0);
    const double gauss[4][2] = {{-g, -g}, {g, -g}, {g, g}, {-g, g}};
    std::array<QuadraturePoint, 4> out{};
    for (int q = 0; q < 4; ++q) {
        const double xi = gauss[q][0];
        const double eta = gauss[q][1];
        double dxi[4], deta[4];
        auto& qp = out[static_cast<std::size_t>(q)];
        for (int a = 0; a < 4; ++a) {
            qp.shape[static_cast<std::size_t>(a)] = 0.25 * (1 + ref[a][0] * xi) * (1 + ref[a][1] * eta);
            dxi[a] = 0.25 * ref[a][0] * (1 + ref[a][1] * eta);
            deta[a] = 0.25 * ref[a][1] * (1 + ref[a][0] * xi);
        }
        double j00 = 0, j01 = 0, j10 = 0, j11 = 0;
        qp.x = {0.0, 0.0};
        for (int a = 0; a < 4; ++a) {
            const Point& p = mesh.nodes[static_cast<std::size_t>(e[static_cast<std::size_t>(a)])];
            j00 += dxi[a] * p[0];
            j01 += dxi[a] * p[1];
            j10 += deta[a] * p[0];
            j11 += deta[a] * p[1];
            qp.x[0] += qp.shape[static_cast<std::size_t>(a)] * p[0];
            qp.x[1] += qp.shape[static_cast<std::size_t>(a)] * p[1];
        }
        const double det = j00 * j11 - j01 * j10;
        if (!(det > 0.0)) throw Error("element with non-positive Jacobian");
        for (int a = 0; a < 4; ++a) {
            qp.grad[static_cast<std::size_t>(a)] = {(j11 * dxi[a] - j01 * deta[a]) / det, (-j10 * dxi[a] + j00 * deta[a]) / det};
        }
        qp.weight = det;
    }
    return out;
}

template <typename ElementFn>
SparseMatrix assemble_elementwise(const ComponentMesh& mesh, int dofs_per_node, std::span<const int> elements,
                                  ElementFn&& element_matrix)
{
    const int block = 4 * dofs_per_node;
    std::vector<Triplet> trips;
    auto visit = [&](int e) {
        const auto& nodes = mesh.elements[static_cast<std::size_t>(e)];
        const Matrix local = element_matrix(nodes);
        for (int a = 0; a < block; ++a) {
            const int ra = nodes[static_cast<std::size_t>(a / dofs_per_node)] * dofs_per_node + a % dofs_per_node;
            for (int b = 0; b < block; ++b) {
                const int cb = nodes[static_cast<std::size_t>(b / dofs_per_node)] * dofs_per_node + b % dofs_per_node;
                if (local(a, b) != 0.0) trips.emplace_back(ra, cb, local(a, b));
            }
        }
    };
    if (elements.empty()) {
        for (int e = 0; e < mesh.num_elements(); ++e) visit(e);
    } else {
        for (int e : elements) visit(e);
    }
    const int n = mesh.num_nodes() * dofs_per_node;
    SparseMatrix out(n, n);
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

}  // namespace detail

/// Element stiffness for the given operator, DOFs ordered node-major.
inline Matrix element_stiffness(const ComponentMesh& mesh, const std::array<int, 4>& nodes, const OperatorSpec& op)
{
    const auto quad = detail::q1_quadrature(mesh, nodes);
    if (op.kind == OperatorKind::laplace) {
        Matrix k = Matrix::Zero(4, 4);
        for (const auto& qp : quad) {
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    k(a, b) += qp.weight * (qp.grad[static_cast<std::size_t>(a)][0] * qp.grad[static_cast<std::size_t>(b)][0] +
                                            qp.grad[static_cast<std::size_t>(a)][1] * qp.grad[static_cast<std::size_t>(b)][1]);
        }
        return k;
    }
    const auto c = plane_stress_tensor(op.poisson_ratio);
    Matrix k = Matrix::Zero(8, 8);
    for (const auto& qp : quad) {
        for (int a = 0; a < 4; ++a)
            for (int i = 0; i < 2; ++i)
                for (int b = 0; b < 4; ++b)
                    for (int kk = 0; kk < 2; ++kk) {
                        double s = 0.0;
                        for (int j = 0; j < 2; ++j)
                            for (int l = 0; l < 2; ++l)
                                s += c[static_cast<std::size_t>(((i * 2 + j) * 2 + kk) * 2 + l)] *
                                     qp.grad[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)] *
                                     qp.grad[static_cast<std::size_t>(b)][static_cast<std::size_t>(l)];
                        k(a * 2 + i, b * 2 + kk) += qp.weight * s;
                    }
    }
    return k;
}

/// Unconstrained stiffness matrix; `elements` restricts assembly to a subset (empty: all).
inline SparseMatrix assemble_stiffness(const ComponentMesh& mesh, const OperatorSpec& op,
                                       std::span<const int> elements = {})
{
    return detail::assemble_elementwise(mesh, op.dofs_per_node(), elements,
                                        [&](const std::array<int, 4>& nodes) { return element_stiffness(mesh, nodes, op); });
}

/// L2 mass matrix, blocked per vector component.
inline SparseMatrix assemble_mass(const ComponentMesh& mesh, int dofs_per_node, std::span<const int> elements = {})
{
    return detail::assemble_elementwise(mesh, dofs_per_node, elements, [&](const std::array<int, 4>& nodes) {
        const auto quad = detail::q1_quadrature(mesh, nodes);
        Matrix m = Matrix::Zero(4 * dofs_per_node, 4 * dofs_per_node);
        for (const auto& qp : quad)
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    for (int c = 0; c < dofs_per_node; ++c)
                        m(a * dofs_per_node + c, b * dofs_per_node + c) +=
                            qp.weight * qp.shape[static_cast<std::size_t>(a)] * qp.shape[static_cast<std::size_t>(b)];
        return m;
    });
}

/// Gradient (H1 seminorm) Gram matrix, blocked per vector component.
inline SparseMatrix assemble_gradient_gram(const ComponentMesh& mesh, int dofs_per_node, std::span<const int> elements = {})
{
    return detail::assemble_elementwise(mesh, dofs_per_node, elements, [&](const std::array<int, 4>& nodes) {
        const Matrix k = element_stiffness(mesh, nodes, laplace_operator());
        Matrix out = Matrix::Zero(4 * dofs_per_node, 4 * dofs_per_node);
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                for (int c = 0; c < dofs_per_node; ++c) out(a * dofs_per_node + c, b * dofs_per_node + c) = k(a, b);
        return out;
    });
}

inline SparseMatrix assemble_h1_gram(const ComponentMesh& mesh, int dofs_per_node, std::span<const int> elements = {})
{
    return SparseMatrix(assemble_gradient_gram(mesh, dofs_per_node, elements) + assemble_mass(mesh, dofs_per_node, elements));
}

inline Vector assemble_load(const ComponentMesh& mesh, const OperatorSpec& op, const LoadFunction& source)
{
    const int dpn = op.dofs_per_node();
    Vector f = Vector::Zero(mesh.num_nodes() * dpn);
    if (!source) return f;
    for (const auto& nodes : mesh.elements) {
        for (const auto& qp : detail::q1_quadrature(mesh, nodes)) {
            const auto value = source(qp.x);
            for (int a = 0; a < 4; ++a)
                for (int c = 0; c < dpn; ++c)
                    f(nodes[static_cast<std::size_t>(a)] * dpn + c) +=
                        qp.weight * qp.shape[static_cast<std::size_t>(a)] * value[static_cast<std::size_t>(c)];
        }
    }
    return f;
}

/// 1D L2 mass matrix of the polyline through `edge_nodes`, blocked per vector component.
inline Matrix edge_mass(const ComponentMesh& mesh, const IndexList& edge_nodes, int dofs_per_node)
{
    const int n = static_cast<int>(edge_nodes.size());
    Matrix m = Matrix::Zero(n * dofs_per_node, n * dofs_per_node);
    for (int s = 0; s + 1 < n; ++s) {
        const Point& p = mesh.nodes[static_cast<std::size_t>(edge_nodes[static_cast<std::size_t>(s)])];
        const Point& q = mesh.nodes[static_cast<std::size_t>(edge_nodes[static_cast<std::size_t>(s + 1)])];
        const double len = std::hypot(q[0] - p[0], q[1] - p[1]);
        for (int c = 0; c < dofs_per_node; ++c) {
            const int i = s * dofs_per_node + c;
            const int j = (s + 1) * dofs_per_node + c;
            m(i, i) += len / 3.0;
            m(j, j) += len / 3.0;
            m(i, j) += len / 6.0;
            m(j, i) += len / 6.0;
        }
    }
    return m;
}

inline Matrix block_diagonal(const std::vector<Matrix>& blocks)
{
    Eigen::Index n = 0;
    for (const auto& b : blocks) n += b.rows();
    Matrix out = Matrix::Zero(n, n);
    Eigen::Index off = 0;
    for (const auto& b : blocks) {
        out.block(off, off, b.rows(), b.cols()) = b;
        off += b.rows();
    }
    return out;
}

/// Linear system with Dirichlet conditions applied by symmetric row/column replacement:
/// constrained rows and columns are zero except a unit diagonal, and the load carries the
/// prescribed value at constrained DOFs.
struct AssembledSystem {
    SparseMatrix stiffness;
    Vector load;
    std::map<int, double> dirichlet_values;
    SparseMatrix raw_stiffness;  // before constraints; defines the energy norm
};

inline AssembledSystem apply_dirichlet(const SparseMatrix& raw, const Vector& load, const std::map<int, double>& dirichlet)
{
    const Eigen::Index n = raw.rows();
    std::vector<char> constrained(static_cast<std::size_t>(n), 0);
    Vector g = Vector::Zero(n);
    for (const auto& [dof, value] : dirichlet) {
        if (dof < 0 || dof >= n) throw Error("Dirichlet DOF out of range");
        constrained[static_cast<std::size_t>(dof)] = 1;
        g(dof) = value;
    }
    AssembledSystem sys;
    sys.raw_stiffness = raw;
    sys.dirichlet_values = dirichlet;
    sys.load = load - raw * g;
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(raw.nonZeros()));
    for (int k = 0; k < raw.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(raw, k); it; ++it) {
            if (!constrained[static_cast<std::size_t>(it.row())] && !constrained[static_cast<std::size_t>(it.col())])
                trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        }
    }
    for (const auto& [dof, value] : dirichlet) {
        trips.emplace_back(dof, dof, 1.0);
        sys.load(dof) = value;
    }
    sys.stiffness.resize(n, n);
    sys.stiffness.setFromTriplets(trips.begin(), trips.end());
    return sys;
}

/// Assembles A u = f on a component pair. The Dirichlet map must cover exactly the constrained
/// DOFs of the pair (Gamma_out and Sigma_D).
inline AssembledSystem assemble(const ComponentPairMesh& pair, const OperatorSpec& op, const LoadFunction& source,
                                const std::map<int, double>& dirichlet)
{
    const auto part = pair.partition(op.dofs_per_node());
    IndexList expected = part.constrained();
    std::sort(expected.begin(), expected.end());
    IndexList given;
    for (const auto& kv : dirichlet) given.push_back(kv.first);
    if (given != expected) throw Error("Dirichlet data must cover exactly the Gamma_out and Sigma_D DOFs");
    return apply_dirichlet(assemble_stiffness(pair.mesh(), op), assemble_load(pair.mesh(), op, source), dirichlet);
}

/// Kernel of the operator sampled at every DOF: constants, or the three rigid body motions.
inline Matrix kernel_basis(const ComponentMesh& mesh, const OperatorSpec& op)
{
    const int n = mesh.num_nodes();
    if (op.kind == OperatorKind::laplace) return Matrix::Ones(n, 1);
    Matrix k = Matrix::Zero(2 * n, 3);
    for (int i = 0; i < n; ++i) {
        const Point& p = mesh.nodes[static_cast<std::size_t>(i)];
        k(2 * i, 0) = 1.0;
        k(2 * i + 1, 1) = 1.0;
        k(2 * i, 2) = -p[1];
        k(2 * i + 1, 2) = p[0];
    }
    return k;
}

/// Largest relative residual ||K col|| / (||K|| ||col||) over the kernel columns.
inline double kernel_residual(const SparseMatrix& raw_stiffness, const Matrix& kernel)
{
    double norm_k = 0.0;
    for (int k = 0; k < raw_stiffness.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(raw_stiffness, k); it; ++it) norm_k = std::max(norm_k, std::abs(it.value()));
    double worst = 0.0;
    for (Eigen::Index c = 0; c < kernel.cols(); ++c) {
        const Vector r = raw_stiffness * kernel.col(c);
        worst = std::max(worst, r.norm() / (norm_k * kernel.col(c).norm()));
    }
    return worst;
}

/// Direct sparse symmetric solve with a singularity and residual check.
inline Vector solve(const AssembledSystem& sys)
{
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(sys.stiffness);
    if (ldlt.info() != Eigen::Success) throw Error("sparse factorization failed");
    const Vector d = ldlt.vectorD().cwiseAbs();
    if (d.size() > 0 && d.minCoeff() <= 1e-12 * d.maxCoeff())
        throw Error("singular system: Dirichlet constraints do not remove the operator kernel "
                    "(constants for Laplace, rigid body motions for elasticity)");
    Vector u = ldlt.solve(sys.load);
    const double fnorm = sys.load.norm();
    const double res = (sys.stiffness * u - sys.load).norm();
    if (res > 1e-10 * std::max(fnorm, std::numeric_limits<double>::min()) && fnorm > 0.0)
        throw Error("linear solve residual check failed");
    return u;
}

}  // namespace portred
