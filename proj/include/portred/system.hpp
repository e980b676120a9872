#pragma once

#include "portred/estimator.hpp"
#include "portred/greedy.hpp"

namespace portred {

/// One placed component: a geometry from the library and the x1 coordinate of its left edge.
struct ComponentInstance {
    std::string geometry_id;
    double position = 0.0;
};

/// 1D chain of components; Dirichlet data is prescribed on the two free ends.
struct SystemLayout {
    std::map<std::string, ComponentSpec> geometries;
    std::vector<ComponentInstance> components;

    [[nodiscard]] int num_components() const { return static_cast<int>(components.size()); }
    [[nodiscard]] int num_ports() const { return num_components() - 1; }
};

/// A component condensed onto its left and right edges, reusable wherever the geometry is placed.
struct CondensedComponent {
    ComponentMesh mesh;
    int dofs_per_node = 1;
    IndexList boundary;  // left edge DOFs, then right edge DOFs
    int left_size = 0;
    Matrix schur;
    Vector rhs;
    InteriorBlock interior;
};

inline CondensedComponent condense_component(const ComponentSpec& spec, const OperatorSpec& op, const Point& body_load = {0.0, 0.0})
{
    CondensedComponent c;
    c.mesh = build_component_mesh(spec);
    c.dofs_per_node = op.dofs_per_node();
    const int dpn = c.dofs_per_node;
    const IndexList left = node_dofs(c.mesh.left_edge, dpn);
    const IndexList right = node_dofs(c.mesh.right_edge, dpn);
    c.boundary = left;
    c.boundary.insert(c.boundary.end(), right.begin(), right.end());
    c.left_size = static_cast<int>(left.size());
    IndexList all(static_cast<std::size_t>(c.mesh.num_nodes() * dpn));
    std::iota(all.begin(), all.end(), 0);
    c.interior.dofs = detail::set_difference(all, c.boundary);

    const SparseMatrix k = assemble_stiffness(c.mesh, op);
    LoadFunction source;
    if (body_load[0] != 0.0 || body_load[1] != 0.0)
        source = [body_load](const Point&) { return body_load; };
    const Vector f = assemble_load(c.mesh, op, source);

    c.schur = Matrix(sparse_block(k, c.boundary, c.boundary));
    c.rhs = gather(f, c.boundary);
    if (!c.interior.dofs.empty()) {
        c.interior.factor = detail::factorize(sparse_block(k, c.interior.dofs, c.interior.dofs));
        c.interior.coupling = sparse_block(k, c.interior.dofs, c.boundary);
        c.interior.load = gather(f, c.interior.dofs);
        c.schur -= c.interior.coupling.transpose() * c.interior.factor->solve(Matrix(c.interior.coupling));
        c.rhs -= c.interior.coupling.transpose() * c.interior.factor->solve(c.interior.load);
    }
    c.schur = 0.5 * (c.schur + c.schur.transpose()).eval();
    return c;
}

/// Condensed chain: the Schur system on all inner port DOFs with end data moved to the rhs.
struct ChainSystem {
    SystemLayout layout;
    OperatorSpec op;
    ChainMesh chain;
    std::vector<std::shared_ptr<const CondensedComponent>> parts;  // per instance, shared per geometry
    std::vector<int> port_offset;                                   // size num_ports + 1
    Vector left_data;
    Vector right_data;
    Matrix schur;
    Vector rhs;

    [[nodiscard]] int num_ports() const { return static_cast<int>(port_offset.size()) - 1; }
    [[nodiscard]] int port_size(int p) const
    {
        return port_offset[static_cast<std::size_t>(p + 1)] - port_offset[static_cast<std::size_t>(p)];
    }
    [[nodiscard]] int total_port_dofs() const { return port_offset.back(); }
};

inline ComponentSpec placed_spec(const SystemLayout& layout, int c)
{
    const auto& inst = layout.components[static_cast<std::size_t>(c)];
    const auto it = layout.geometries.find(inst.geometry_id);
    if (it == layout.geometries.end()) throw Error("layout references unknown geometry '" + inst.geometry_id + "'");
    ComponentSpec spec = it->second;
    spec.origin[0] = inst.position;
    return spec;
}

inline ChainSystem build_chain_system(const SystemLayout& layout, const OperatorSpec& op, const Vector& left_data,
                                      const Vector& right_data, const Point& body_load = {0.0, 0.0})
{
    if (layout.num_components() < 2) throw Error("a system needs at least two components");
    ChainSystem sys;
    sys.layout = layout;
    sys.op = op;
    const int dpn = op.dofs_per_node();

    std::vector<ComponentMesh> meshes;
    std::map<std::string, std::shared_ptr<const CondensedComponent>> cache;
    for (int c = 0; c < layout.num_components(); ++c) {
        const ComponentSpec spec = placed_spec(layout, c);
        meshes.push_back(build_component_mesh(spec));
        const auto& id = layout.components[static_cast<std::size_t>(c)].geometry_id;
        auto& entry = cache[id];
        if (!entry) entry = std::make_shared<CondensedComponent>(condense_component(spec, op, body_load));
        sys.parts.push_back(entry);
    }
    sys.chain = join_chain(meshes);

    sys.port_offset.push_back(0);
    for (int p = 0; p < sys.chain.num_ports(); ++p)
        sys.port_offset.push_back(sys.port_offset.back() + static_cast<int>(sys.chain.port(p).size()) * dpn);

    const auto end_size = [&](int e) { return static_cast<Eigen::Index>(sys.chain.edges[static_cast<std::size_t>(e)].size() * dpn); };
    if (left_data.size() != end_size(0)) throw Error("left end data does not match the left edge DOFs");
    if (right_data.size() != end_size(static_cast<int>(sys.chain.edges.size()) - 1))
        throw Error("right end data does not match the right edge DOFs");
    sys.left_data = left_data;
    sys.right_data = right_data;

    const int n = sys.total_port_dofs();
    sys.schur = Matrix::Zero(n, n);
    sys.rhs = Vector::Zero(n);
    const int last = layout.num_components() - 1;
    for (int c = 0; c <= last; ++c) {
        const auto& part = *sys.parts[static_cast<std::size_t>(c)];
        const int nl = part.left_size;
        const int nr = static_cast<int>(part.boundary.size()) - nl;
        // global offsets of the left/right edge; -1 marks a Dirichlet end
        const int left_off = c == 0 ? -1 : sys.port_offset[static_cast<std::size_t>(c - 1)];
        const int right_off = c == last ? -1 : sys.port_offset[static_cast<std::size_t>(c)];
        const int offs[2] = {left_off, right_off};
        const int sizes[2] = {nl, nr};
        const int starts[2] = {0, nl};
        const Vector* ends[2] = {&sys.left_data, &sys.right_data};
        for (int a = 0; a < 2; ++a) {
            if (offs[a] < 0) continue;
            sys.rhs.segment(offs[a], sizes[a]) += part.rhs.segment(starts[a], sizes[a]);
            for (int b = 0; b < 2; ++b) {
                const auto blk = part.schur.block(starts[a], starts[b], sizes[a], sizes[b]);
                if (offs[b] >= 0)
                    sys.schur.block(offs[a], offs[b], sizes[a], sizes[b]) += blk;
                else
                    sys.rhs.segment(offs[a], sizes[a]) -= blk * *ends[b];
            }
        }
    }
    sys.schur = 0.5 * (sys.schur + sys.schur.transpose()).eval();
    return sys;
}

struct ChainSolution {
    std::vector<Vector> coefficients;  // per port
    Vector ports;                      // all inner port DOFs
    Vector full;                       // on the merged chain mesh
};

/// Full vector on the merged mesh from port values: local interior solves per component.
inline Vector recover_chain(const ChainSystem& sys, const Vector& ports)
{
    const int dpn = sys.op.dofs_per_node();
    const int last = sys.layout.num_components() - 1;
    Vector full = Vector::Zero(sys.chain.mesh.num_nodes() * dpn);
    for (int c = 0; c <= last; ++c) {
        const auto& part = *sys.parts[static_cast<std::size_t>(c)];
        const int nl = part.left_size;
        const int nr = static_cast<int>(part.boundary.size()) - nl;
        Vector ub(part.boundary.size());
        ub.head(nl) = c == 0 ? sys.left_data : Vector(ports.segment(sys.port_offset[static_cast<std::size_t>(c - 1)], nl));
        ub.tail(nr) = c == last ? sys.right_data : Vector(ports.segment(sys.port_offset[static_cast<std::size_t>(c)], nr));
        Vector local = Vector::Zero(part.mesh.num_nodes() * dpn);
        scatter(ub, part.boundary, local);
        if (!part.interior.dofs.empty())
            scatter(part.interior.factor->solve(Vector(part.interior.load - part.interior.coupling * ub)), part.interior.dofs, local);
        const auto& map = sys.chain.component_nodes[static_cast<std::size_t>(c)];
        for (int node = 0; node < part.mesh.num_nodes(); ++node)
            for (int k = 0; k < dpn; ++k) full(map[static_cast<std::size_t>(node)] * dpn + k) = local(node * dpn + k);
    }
    return full;
}

/// Galerkin solve with one basis per inner port (N_p x m_p each).
inline ChainSolution solve_chain(const ChainSystem& sys, const std::vector<Matrix>& bases)
{
    if (static_cast<int>(bases.size()) != sys.num_ports()) throw Error("need one port basis per inner port");
    Eigen::Index cols = 0;
    for (int p = 0; p < sys.num_ports(); ++p) {
        const auto& b = bases[static_cast<std::size_t>(p)];
        if (b.rows() != sys.port_size(p))
            throw Error("incompatible port basis at port " + std::to_string(p) + ": " + std::to_string(b.rows()) + " rows for " +
                        std::to_string(sys.port_size(p)) + " port DOFs");
        cols += b.cols();
    }
    Matrix phi = Matrix::Zero(sys.total_port_dofs(), cols);
    Eigen::Index c = 0;
    for (int p = 0; p < sys.num_ports(); ++p) {
        const auto& b = bases[static_cast<std::size_t>(p)];
        phi.block(sys.port_offset[static_cast<std::size_t>(p)], c, b.rows(), b.cols()) = b;
        c += b.cols();
    }
    const Matrix reduced = phi.transpose() * sys.schur * phi;
    Eigen::LLT<Matrix> llt(reduced);
    if (llt.info() != Eigen::Success) throw Error("reduced chain matrix is not positive definite: port bases are dependent");
    const Vector coeffs = llt.solve(Vector(phi.transpose() * sys.rhs));
    ChainSolution out;
    c = 0;
    for (int p = 0; p < sys.num_ports(); ++p) {
        const auto m = bases[static_cast<std::size_t>(p)].cols();
        out.coefficients.emplace_back(coeffs.segment(c, m));
        c += m;
    }
    out.ports = phi * coeffs;
    out.full = recover_chain(sys, out.ports);
    return out;
}

inline ChainSolution solve_chain_full(const ChainSystem& sys)
{
    std::vector<Matrix> bases;
    for (int p = 0; p < sys.num_ports(); ++p) bases.emplace_back(Matrix::Identity(sys.port_size(p), sys.port_size(p)));
    return solve_chain(sys, bases);
}

/// Monolithic FE solve of the whole chain with the same end data.
inline Vector solve_chain_monolithic(const ChainSystem& sys, const Point& body_load = {0.0, 0.0})
{
    const int dpn = sys.op.dofs_per_node();
    const auto& mesh = sys.chain.mesh;
    std::map<int, double> dirichlet;
    const IndexList left = node_dofs(sys.chain.edges.front(), dpn);
    const IndexList right = node_dofs(sys.chain.edges.back(), dpn);
    for (std::size_t k = 0; k < left.size(); ++k) dirichlet[left[k]] = sys.left_data(static_cast<Eigen::Index>(k));
    for (std::size_t k = 0; k < right.size(); ++k) dirichlet[right[k]] = sys.right_data(static_cast<Eigen::Index>(k));
    LoadFunction source;
    if (body_load[0] != 0.0 || body_load[1] != 0.0)
        source = [body_load](const Point&) { return body_load; };
    return solve(apply_dirichlet(assemble_stiffness(mesh, sys.op), assemble_load(mesh, sys.op, source), dirichlet));
}

/// Schur residual restricted to each inner port.
inline std::vector<Vector> port_residuals(const ChainSystem& sys, const Vector& ports)
{
    const Vector r = sys.rhs - sys.schur * ports;
    std::vector<Vector> out;
    for (int p = 0; p < sys.num_ports(); ++p) out.emplace_back(r.segment(sys.port_offset[static_cast<std::size_t>(p)], sys.port_size(p)));
    return out;
}

/// L2(Gamma_p) norms of the flux jumps at every inner port.
inline std::vector<double> port_jump_norms(const ChainSystem& sys, const Vector& ports)
{
    const auto residuals = port_residuals(sys, ports);
    std::vector<double> out;
    for (int p = 0; p < sys.num_ports(); ++p)
        out.push_back(residual_dual_norm(residuals[static_cast<std::size_t>(p)],
                                         edge_mass(sys.chain.mesh, sys.chain.port(p), sys.op.dofs_per_node())));
    return out;
}

/// Estimator constants for the chain. Each port is charged to its left neighbor, whose trace
/// constant is taken without boundary constraints.
inline EstimatorConstants compute_chain_constants(const ChainSystem& sys, double safety = 0.99)
{
    const int dpn = sys.op.dofs_per_node();
    EstimatorConstants out;
    std::map<const CondensedComponent*, double> cache;
    for (int c = 0; c < sys.num_ports(); ++c) {
        const auto* part = sys.parts[static_cast<std::size_t>(c)].get();
        auto it = cache.find(part);
        if (it == cache.end()) {
            IndexList all(static_cast<std::size_t>(part->mesh.num_nodes() * dpn));
            std::iota(all.begin(), all.end(), 0);
            const double ct = detail::trace_constant(assemble_h1_gram(part->mesh, dpn), all, node_dofs(part->mesh.right_edge, dpn),
                                                     edge_mass(part->mesh, part->mesh.right_edge, dpn));
            it = cache.emplace(part, ct).first;
        }
        out.trace.push_back(it->second);
    }
    IndexList ends = node_dofs(sys.chain.edges.front(), dpn);
    const IndexList right = node_dofs(sys.chain.edges.back(), dpn);
    ends.insert(ends.end(), right.begin(), right.end());
    IndexList all(static_cast<std::size_t>(sys.chain.mesh.num_nodes() * dpn));
    std::iota(all.begin(), all.end(), 0);
    const IndexList free = detail::set_difference(all, ends);
    const IndexList port0 = node_dofs(sys.chain.port(0), dpn);
    detail::global_constants(sys.chain.mesh, sys.op, free, port0, edge_mass(sys.chain.mesh, sys.chain.port(0), dpn),
                             detail::max_segment(sys.chain.mesh, sys.chain.port(0)), false, safety, out);
    return out;
}

/// Spectral greedy with both the local tolerance test and the stopping threshold scaled by the
/// expected number of port occurrences.
inline GreedyResult scaled_tolerance_greedy(const TrainingSet& train, double eps, int expected_ports,
                                            const GreedyConstants& consts = {})
{
    if (expected_ports < 1) throw Error("expected port count must be >= 1");
    return spectral_greedy(train, eps, consts, expected_ports);
}

}  // namespace portred
