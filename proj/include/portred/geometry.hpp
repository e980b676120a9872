#pragma once

#include "portred/types.hpp"

#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <variant>

namespace portred {

using Point = std::array<double, 2>;

namespace tag {
inline constexpr const char* gamma_in = "GammaIn";
inline constexpr const char* gamma_out = "GammaOut";
inline constexpr const char* sigma_d = "SigmaD";
inline constexpr const char* sigma_n = "SigmaN";
inline constexpr const char* defect = "DefectBoundary";
}  // namespace tag

enum class CrackEdge { top, bottom };

/// Vertical zero-width slit starting at the top or bottom edge.
struct Crack {
    CrackEdge from_edge = CrackEdge::top;
    double depth_fraction = 0.5;
    double position_fraction = 0.5;
};

/// Rectangular hole; fractions are relative to the component width and height.
struct Hole {
    Point center_fraction{0.5, 0.5};
    Point half_extent_fraction{0.1, 0.1};
};

using Defect = std::variant<std::monostate, Crack, Hole>;

struct ComponentSpec {
    Point origin{0.0, 0.0};
    double width = 1.0;
    double height = 1.0;
    int nx = 10;
    int ny = 10;
    Defect defect{};
};

struct ComponentMesh {
    std::vector<Point> nodes;
    std::vector<std::array<int, 4>> elements;  // counterclockwise
    std::map<std::string, IndexList> tags;     // sorted node indices per tag
    IndexList left_edge;                       // bottom to top
    IndexList right_edge;                      // bottom to top

    [[nodiscard]] int num_nodes() const { return static_cast<int>(nodes.size()); }
    [[nodiscard]] int num_elements() const { return static_cast<int>(elements.size()); }
    [[nodiscard]] const IndexList& tagged(const std::string& name) const
    {
        static const IndexList empty;
        auto it = tags.find(name);
        return it == tags.end() ? empty : it->second;
    }
};

namespace detail {

inline int to_mesh_line(double fraction, int cells, const char* what)
{
    const double pos = fraction * cells;
    const double rounded = std::round(pos);
    if (std::abs(pos - rounded) > 1e-9 * std::max(1.0, std::abs(pos))) {
        std::ostringstream msg;
        msg << what << " = " << fraction << " does not lie on a mesh line (" << pos << " cells of " << cells << ")";
        throw Error(msg.str());
    }
    return static_cast<int>(rounded);
}

inline void sort_unique(IndexList& v)
{
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

inline double signed_area(const ComponentMesh& m, const std::array<int, 4>& e)
{
    double a = 0.0;
    for (int k = 0; k < 4; ++k) {
        const Point& p = m.nodes[static_cast<std::size_t>(e[static_cast<std::size_t>(k)])];
        const Point& q = m.nodes[static_cast<std::size_t>(e[static_cast<std::size_t>((k + 1) % 4)])];
        a += p[0] * q[1] - q[0] * p[1];
    }
    return 0.5 * a;
}

}  // namespace detail

/// Structured tensor-product Q1 mesh of one rectangular component, with its defect applied.
inline ComponentMesh build_component_mesh(const ComponentSpec& spec)
{
    if (spec.nx < 1 || spec.ny < 1) throw Error("component needs nx >= 1 and ny >= 1");
    if (!(spec.width > 0.0) || !(spec.height > 0.0)) throw Error("component width and height must be positive");
    const int nx = spec.nx;
    const int ny = spec.ny;
    auto grid = [nx](int i, int j) { return j * (nx + 1) + i; };

    ComponentMesh mesh;
    mesh.nodes.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            mesh.nodes.push_back({spec.origin[0] + spec.width * i / nx, spec.origin[1] + spec.height * j / ny});
        }
    }
    std::vector<bool> element_alive(static_cast<std::size_t>(nx * ny), true);
    std::vector<std::array<int, 4>> elements;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) elements.push_back({grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1)});
    }

    IndexList defect_nodes;
    if (const auto* crack = std::get_if<Crack>(&spec.defect)) {
        if (!(crack->depth_fraction > 0.0 && crack->depth_fraction < 1.0))
            throw Error("crack depth_fraction must lie in (0,1)");
        if (!(crack->position_fraction > 0.0 && crack->position_fraction < 1.0))
            throw Error("crack position_fraction must lie in (0,1)");
        const int column = detail::to_mesh_line(crack->position_fraction, nx, "crack position_fraction");
        const int rows = detail::to_mesh_line(crack->depth_fraction, ny, "crack depth_fraction");
        if (column <= 0 || column >= nx || rows <= 0 || rows >= ny) throw Error("crack path must stay inside the component");
        // Slit nodes except the tip get a twin referenced by the elements right of the slit.
        const bool from_top = crack->from_edge == CrackEdge::top;
        const int tip_row = from_top ? ny - rows : rows;
        std::map<int, int> twin;
        for (int step = 1; step <= rows; ++step) {
            const int j = from_top ? tip_row + step : tip_row - step;
            const int original = grid(column, j);
            twin[original] = static_cast<int>(mesh.nodes.size());
            mesh.nodes.push_back(mesh.nodes[static_cast<std::size_t>(original)]);
            defect_nodes.push_back(original);
            defect_nodes.push_back(twin[original]);
        }
        defect_nodes.push_back(grid(column, tip_row));
        const int j_lo = from_top ? tip_row : 0;
        const int j_hi = from_top ? ny : tip_row;
        for (int j = j_lo; j < j_hi; ++j) {
            auto& e = elements[static_cast<std::size_t>(j * nx + column)];
            for (auto& n : e) {
                auto it = twin.find(n);
                if (it != twin.end()) n = it->second;
            }
        }
    } else if (const auto* hole = std::get_if<Hole>(&spec.defect)) {
        const int i0 = detail::to_mesh_line(hole->center_fraction[0] - hole->half_extent_fraction[0], nx, "hole left side");
        const int i1 = detail::to_mesh_line(hole->center_fraction[0] + hole->half_extent_fraction[0], nx, "hole right side");
        const int j0 = detail::to_mesh_line(hole->center_fraction[1] - hole->half_extent_fraction[1], ny, "hole bottom side");
        const int j1 = detail::to_mesh_line(hole->center_fraction[1] + hole->half_extent_fraction[1], ny, "hole top side");
        if (i1 <= i0 || j1 <= j0) throw Error("hole must cover at least one element");
        if (i0 < 1 || i1 > nx - 1 || j0 < 1 || j1 > ny - 1) throw Error("hole touches the component boundary");
        for (int j = j0; j < j1; ++j) {
            for (int i = i0; i < i1; ++i) element_alive[static_cast<std::size_t>(j * nx + i)] = false;
        }
        for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
                if (i == i0 || i == i1 || j == j0 || j == j1) defect_nodes.push_back(grid(i, j));
            }
        }
    }

    for (std::size_t e = 0; e < elements.size(); ++e) {
        if (element_alive[e]) mesh.elements.push_back(elements[e]);
    }

    // Drop nodes no element references (hole interior) and renumber in original order.
    std::vector<int> used(mesh.nodes.size(), 0);
    for (const auto& e : mesh.elements) {
        for (int n : e) used[static_cast<std::size_t>(n)] = 1;
    }
    std::vector<int> renumber(mesh.nodes.size(), -1);
    std::vector<Point> kept;
    for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
        if (used[n]) {
            renumber[n] = static_cast<int>(kept.size());
            kept.push_back(mesh.nodes[n]);
        }
    }
    mesh.nodes = std::move(kept);
    for (auto& e : mesh.elements) {
        for (auto& n : e) n = renumber[static_cast<std::size_t>(n)];
    }
    auto map_list = [&](const IndexList& in) {
        IndexList out;
        for (int n : in) {
            if (renumber[static_cast<std::size_t>(n)] >= 0) out.push_back(renumber[static_cast<std::size_t>(n)]);
        }
        return out;
    };

    IndexList left, right, bottom, top;
    for (int j = 0; j <= ny; ++j) {
        left.push_back(grid(0, j));
        right.push_back(grid(nx, j));
    }
    for (int i = 0; i <= nx; ++i) {
        bottom.push_back(grid(i, 0));
        top.push_back(grid(i, ny));
    }
    // Crack twins on the top/bottom edge are traction-free as well.
    IndexList sigma_n = map_list(bottom);
    for (int n : map_list(top)) sigma_n.push_back(n);
    IndexList defect = map_list(defect_nodes);
    for (int n : defect) sigma_n.push_back(n);

    mesh.left_edge = map_list(left);
    mesh.right_edge = map_list(right);
    IndexList ports = mesh.left_edge;
    ports.insert(ports.end(), mesh.right_edge.begin(), mesh.right_edge.end());
    detail::sort_unique(ports);
    detail::sort_unique(sigma_n);
    detail::sort_unique(defect);
    mesh.tags[tag::gamma_out] = ports;
    mesh.tags[tag::sigma_n] = sigma_n;
    if (!defect.empty()) mesh.tags[tag::defect] = defect;

    for (const auto& e : mesh.elements) {
        if (detail::signed_area(mesh, e) <= 0.0) throw Error("element with non-positive area generated");
    }
    return mesh;
}

/// Several components joined left to right on shared vertical ports.
struct ChainMesh {
    ComponentMesh mesh;                     // merged
    std::vector<int> element_owner;         // component index per merged element
    std::vector<IndexList> component_nodes; // merged id of every local node, per component
    std::vector<IndexList> edges;           // vertical edges bottom to top: [0] left end, [k] right end, others ports

    [[nodiscard]] int num_components() const { return static_cast<int>(component_nodes.size()); }
    [[nodiscard]] int num_ports() const { return static_cast<int>(edges.size()) - 2; }
    [[nodiscard]] const IndexList& port(int p) const { return edges[static_cast<std::size_t>(p + 1)]; }
};

inline ChainMesh join_chain(const std::vector<ComponentMesh>& parts)
{
    if (parts.empty()) throw Error("join_chain needs at least one component");
    ChainMesh chain;
    chain.edges.push_back({});
    for (std::size_t c = 0; c < parts.size(); ++c) {
        const ComponentMesh& part = parts[c];
        IndexList local_to_merged(part.nodes.size(), -1);
        if (c > 0) {
            const ComponentMesh& prev = parts[c - 1];
            if (prev.right_edge.size() != part.left_edge.size()) {
                std::ostringstream msg;
                msg << "port meshes do not coincide between components " << c - 1 << " and " << c << ": "
                    << prev.right_edge.size() << " vs " << part.left_edge.size() << " port nodes";
                throw Error(msg.str());
            }
            double scale = 1.0;
            for (int n : part.left_edge) scale = std::max({scale, std::abs(part.nodes[static_cast<std::size_t>(n)][0]), std::abs(part.nodes[static_cast<std::size_t>(n)][1])});
            const IndexList& shared = chain.edges.back();
            for (std::size_t k = 0; k < part.left_edge.size(); ++k) {
                const Point& a = prev.nodes[static_cast<std::size_t>(prev.right_edge[k])];
                const Point& b = part.nodes[static_cast<std::size_t>(part.left_edge[k])];
                if (std::abs(a[0] - b[0]) > 1e-10 * scale || std::abs(a[1] - b[1]) > 1e-10 * scale) {
                    std::ostringstream msg;
                    msg.precision(12);
                    msg << "port meshes do not coincide between components " << c - 1 << " and " << c
                        << ": port node " << k << " at (" << a[0] << ", " << a[1] << ") vs (" << b[0] << ", " << b[1] << ")";
                    throw Error(msg.str());
                }
                local_to_merged[static_cast<std::size_t>(part.left_edge[k])] = shared[k];
            }
        }
        for (std::size_t n = 0; n < part.nodes.size(); ++n) {
            if (local_to_merged[n] >= 0) continue;
            local_to_merged[n] = chain.mesh.num_nodes();
            chain.mesh.nodes.push_back(part.nodes[n]);
        }
        for (const auto& e : part.elements) {
            std::array<int, 4> merged{};
            for (int k = 0; k < 4; ++k) merged[static_cast<std::size_t>(k)] = local_to_merged[static_cast<std::size_t>(e[static_cast<std::size_t>(k)])];
            chain.mesh.elements.push_back(merged);
            chain.element_owner.push_back(static_cast<int>(c));
        }
        if (c == 0) {
            for (int n : part.left_edge) chain.edges[0].push_back(local_to_merged[static_cast<std::size_t>(n)]);
        }
        IndexList right;
        for (int n : part.right_edge) right.push_back(local_to_merged[static_cast<std::size_t>(n)]);
        chain.edges.push_back(right);
        for (const auto& [name, nodes] : part.tags) {
            if (name == tag::gamma_out || name == tag::gamma_in) continue;
            auto& target = chain.mesh.tags[name];
            for (int n : nodes) target.push_back(local_to_merged[static_cast<std::size_t>(n)]);
        }
        chain.component_nodes.push_back(std::move(local_to_merged));
    }
    chain.mesh.left_edge = chain.edges.front();
    chain.mesh.right_edge = chain.edges.back();
    IndexList outer = chain.edges.front();
    outer.insert(outer.end(), chain.edges.back().begin(), chain.edges.back().end());
    IndexList inner;
    for (int p = 0; p < chain.num_ports(); ++p) inner.insert(inner.end(), chain.port(p).begin(), chain.port(p).end());
    chain.mesh.tags[tag::gamma_out] = outer;
    if (!inner.empty()) chain.mesh.tags[tag::gamma_in] = inner;
    for (auto& [name, nodes] : chain.mesh.tags) detail::sort_unique(nodes);
    return chain;
}

/// Index sets splitting the DOFs of a component pair. Port sets are ordered bottom to top,
/// then by vector component; all other sets ascend.
struct DofPartition {
    IndexList omega1;
    IndexList omega2;
    IndexList gamma_in;
    IndexList gamma_out;
    IndexList dirichlet;  // Sigma_D DOFs off Gamma_out
    int num_dofs = 0;

    [[nodiscard]] IndexList constrained() const
    {
        IndexList c = gamma_out;
        c.insert(c.end(), dirichlet.begin(), dirichlet.end());
        return c;
    }
    /// Everything that is solved for: omega1, omega2 and gamma_in.
    [[nodiscard]] IndexList free() const
    {
        IndexList f = omega1;
        f.insert(f.end(), omega2.begin(), omega2.end());
        f.insert(f.end(), gamma_in.begin(), gamma_in.end());
        return f;
    }
};

inline IndexList node_dofs(const IndexList& nodes, int dofs_per_node)
{
    IndexList out;
    out.reserve(nodes.size() * static_cast<std::size_t>(dofs_per_node));
    for (int n : nodes) {
        for (int c = 0; c < dofs_per_node; ++c) out.push_back(n * dofs_per_node + c);
    }
    return out;
}

struct ComponentPairMesh {
    ChainMesh chain;

    [[nodiscard]] const ComponentMesh& mesh() const { return chain.mesh; }
    [[nodiscard]] const IndexList& gamma_in_nodes() const { return chain.edges[1]; }
    [[nodiscard]] IndexList gamma_out_nodes() const
    {
        IndexList out = chain.edges[0];
        out.insert(out.end(), chain.edges[2].begin(), chain.edges[2].end());
        return out;
    }

    [[nodiscard]] DofPartition partition(int dofs_per_node) const
    {
        const int n_nodes = chain.mesh.num_nodes();
        // 0 interior of component 0, 1 interior of component 1, 2 gamma_in, 3 gamma_out, 4 dirichlet
        std::vector<int> cls(static_cast<std::size_t>(n_nodes), -1);
        for (int n : chain.mesh.tagged(tag::sigma_d)) cls[static_cast<std::size_t>(n)] = 4;
        for (int n : gamma_out_nodes()) cls[static_cast<std::size_t>(n)] = 3;
        for (int n : gamma_in_nodes()) cls[static_cast<std::size_t>(n)] = 2;
        for (int c = 0; c < 2; ++c) {
            for (int n : chain.component_nodes[static_cast<std::size_t>(c)]) {
                if (cls[static_cast<std::size_t>(n)] < 0) cls[static_cast<std::size_t>(n)] = c;
            }
        }
        IndexList by_class[5];
        for (int n = 0; n < n_nodes; ++n) {
            if (cls[static_cast<std::size_t>(n)] < 0) throw Error("node not covered by the pair partition");
            if (cls[static_cast<std::size_t>(n)] == 2 || cls[static_cast<std::size_t>(n)] == 3) continue;
            by_class[cls[static_cast<std::size_t>(n)]].push_back(n);
        }
        DofPartition p;
        p.num_dofs = n_nodes * dofs_per_node;
        p.omega1 = node_dofs(by_class[0], dofs_per_node);
        p.omega2 = node_dofs(by_class[1], dofs_per_node);
        p.dirichlet = node_dofs(by_class[4], dofs_per_node);
        p.gamma_in = node_dofs(gamma_in_nodes(), dofs_per_node);
        p.gamma_out = node_dofs(gamma_out_nodes(), dofs_per_node);
        return p;
    }
};

inline ComponentPairMesh join_pair(const ComponentMesh& m1, const ComponentMesh& m2)
{
    return ComponentPairMesh{join_chain({m1, m2})};
}

}  // namespace portred
