#pragma once

#include "portred/system.hpp"

#include <json.hpp>
#include <unsupported/Eigen/SparseExtra>

#include <fstream>

namespace portred::io {

using Json = nlohmann::json;

inline Json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw Error("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline void write_json(const std::string& path, const Json& j)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

/// Throws a readable error for a missing key instead of the library's generic one.
inline const Json& require(const Json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key)) throw Error(std::string("missing field '") + key + "'");
    return j.at(key);
}

// ---- geometry ----

inline Json to_json(const ComponentSpec& s)
{
    Json j{{"origin", {s.origin[0], s.origin[1]}}, {"width", s.width}, {"height", s.height}, {"nx", s.nx}, {"ny", s.ny}};
    if (const auto* c = std::get_if<Crack>(&s.defect)) {
        j["defect"] = {{"type", "crack"},
                       {"from_edge", c->from_edge == CrackEdge::top ? "top" : "bottom"},
                       {"depth_fraction", c->depth_fraction},
                       {"position_fraction", c->position_fraction}};
    } else if (const auto* h = std::get_if<Hole>(&s.defect)) {
        j["defect"] = {{"type", "hole"},
                       {"center_fraction", {h->center_fraction[0], h->center_fraction[1]}},
                       {"half_extent_fraction", {h->half_extent_fraction[0], h->half_extent_fraction[1]}}};
    } else {
        j["defect"] = nullptr;
    }
    return j;
}

inline Point point_from_json(const Json& j)
{
    if (!j.is_array() || j.size() != 2) throw Error("expected a coordinate pair [x1, x2]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline ComponentSpec spec_from_json(const Json& j)
{
    ComponentSpec s;
    if (j.contains("origin")) s.origin = point_from_json(j["origin"]);
    s.width = require(j, "width").get<double>();
    s.height = require(j, "height").get<double>();
    s.nx = require(j, "nx").get<int>();
    s.ny = require(j, "ny").get<int>();
    if (j.contains("defect") && !j["defect"].is_null()) {
        const Json& d = j["defect"];
        const auto type = require(d, "type").get<std::string>();
        if (type == "crack") {
            Crack c;
            const auto edge = d.value("from_edge", std::string("top"));
            if (edge != "top" && edge != "bottom") throw Error("crack from_edge must be 'top' or 'bottom'");
            c.from_edge = edge == "top" ? CrackEdge::top : CrackEdge::bottom;
            c.depth_fraction = d.value("depth_fraction", c.depth_fraction);
            c.position_fraction = d.value("position_fraction", c.position_fraction);
            s.defect = c;
        } else if (type == "hole") {
            Hole h;
            if (d.contains("center_fraction")) h.center_fraction = point_from_json(d["center_fraction"]);
            if (d.contains("half_extent_fraction")) h.half_extent_fraction = point_from_json(d["half_extent_fraction"]);
            s.defect = h;
        } else if (type != "none") {
            throw Error("unknown defect type '" + type + "'");
        }
    }
    return s;
}

inline Json to_json(const ComponentMesh& m)
{
    Json nodes = Json::array();
    for (const auto& p : m.nodes) nodes.push_back({p[0], p[1]});
    Json elements = Json::array();
    for (const auto& e : m.elements) elements.push_back({e[0], e[1], e[2], e[3]});
    Json tags = Json::object();
    for (const auto& [name, list] : m.tags) tags[name] = list;
    return {{"nodes", nodes}, {"elements", elements}, {"tags", tags}, {"left_edge", m.left_edge}, {"right_edge", m.right_edge}};
}

inline ComponentMesh mesh_from_json(const Json& j)
{
    ComponentMesh m;
    for (const auto& p : require(j, "nodes")) m.nodes.push_back(point_from_json(p));
    for (const auto& e : require(j, "elements")) {
        if (!e.is_array() || e.size() != 4) throw Error("elements must have four node indices");
        std::array<int, 4> el{};
        for (std::size_t a = 0; a < 4; ++a) {
            el[a] = e[a].get<int>();
            if (el[a] < 0 || el[a] >= m.num_nodes()) throw Error("element references a node out of range");
        }
        m.elements.push_back(el);
    }
    if (j.contains("tags"))
        for (const auto& [name, list] : j["tags"].items()) m.tags[name] = list.get<IndexList>();
    if (j.contains("left_edge")) m.left_edge = j["left_edge"].get<IndexList>();
    if (j.contains("right_edge")) m.right_edge = j["right_edge"].get<IndexList>();
    return m;
}

/// {"omega1": spec, "omega2": spec}
inline ComponentPairMesh pair_from_json(const Json& j)
{
    return join_pair(build_component_mesh(spec_from_json(require(j, "omega1"))),
                     build_component_mesh(spec_from_json(require(j, "omega2"))));
}

// ---- operators and metrics ----

inline OperatorSpec operator_from_json(const Json& j)
{
    if (j.is_string()) return operator_from_name(j.get<std::string>());
    OperatorSpec op = operator_from_name(require(j, "kind").get<std::string>());
    op.poisson_ratio = j.value("poisson_ratio", op.poisson_ratio);
    if (!(op.poisson_ratio > -1.0 && op.poisson_ratio < 0.5)) throw Error("poisson_ratio must lie in (-1, 0.5)");
    return op;
}

inline Json to_json(const OperatorSpec& op)
{
    if (op.kind == OperatorKind::laplace) return {{"kind", "laplace"}};
    return {{"kind", "elasticity"}, {"poisson_ratio", op.poisson_ratio}};
}

inline PortMetricKind metric_from_name(const std::string& name)
{
    if (name == "l2") return PortMetricKind::l2;
    if (name == "lifting") return PortMetricKind::lifting;
    throw Error("unknown port metric '" + name + "' (expected l2 or lifting)");
}

// ---- port spaces ----

inline Json to_json(const PortSpace& s)
{
    std::vector<double> basis(s.basis.data(), s.basis.data() + s.basis.size());  // column-major
    Json values = Json::array();
    Json modes = Json::array();
    for (const auto& m : s.modes) {
        if (m.kind == ModeKind::spectral)
            values.push_back(m.value);
        else
            values.push_back(to_string(m.kind));
        modes.push_back({{"kind", to_string(m.kind)}, {"value", m.value}});
    }
    return {{"basis", basis}, {"values", values}, {"modes", modes}, {"metric", to_string(s.metric)},
            {"port_dofs", s.port_dofs()}, {"dim", s.dim()}};
}

inline ModeKind mode_kind_from_name(const std::string& name)
{
    for (auto k : {ModeKind::kernel, ModeKind::data, ModeKind::spectral, ModeKind::greedy, ModeKind::complement})
        if (name == to_string(k)) return k;
    throw Error("unknown port mode tag '" + name + "'");
}

inline PortSpace port_space_from_json(const Json& j)
{
    PortSpace s;
    const int rows = require(j, "port_dofs").get<int>();
    const auto flat = require(j, "basis").get<std::vector<double>>();
    if (rows <= 0 || flat.size() % static_cast<std::size_t>(rows) != 0) throw Error("port space basis size is not a multiple of port_dofs");
    const auto cols = static_cast<Eigen::Index>(flat.size() / static_cast<std::size_t>(rows));
    s.basis = Eigen::Map<const Matrix>(flat.data(), rows, cols);
    const std::string metric = j.value("metric", std::string("none"));
    s.metric = metric == "none" ? PortMetricKind::none : metric_from_name(metric);
    if (j.contains("modes")) {
        for (const auto& m : j["modes"]) s.modes.push_back({mode_kind_from_name(m.at("kind").get<std::string>()), m.value("value", 0.0)});
    } else if (j.contains("values")) {
        for (const auto& v : j["values"]) {
            if (v.is_number())
                s.modes.push_back({ModeKind::spectral, v.get<double>()});
            else
                s.modes.push_back({mode_kind_from_name(v.get<std::string>()), 0.0});
        }
    }
    if (!s.modes.empty() && static_cast<Eigen::Index>(s.modes.size()) != cols) throw Error("port space has a mode tag count that differs from its dimension");
    if (s.modes.empty()) s.modes.assign(static_cast<std::size_t>(cols), PortMode{ModeKind::complement, 0.0});
    return s;
}

// ---- greedy ----

inline Json to_json(const GreedyResult& g, const TrainingSet& train)
{
    Json selected = Json::array();
    for (int i : g.selected) selected.push_back({{"index", i}, {"label", train.members[static_cast<std::size_t>(i)].label}});
    Json history = Json::array();
    for (const auto& h : g.history) {
        history.push_back({{"iteration", h.iteration},
                           {"basis_dim", h.basis_dim},
                           {"chosen", h.chosen},
                           {"deviation", h.deviation},
                           {"deviations", h.deviations}});
    }
    Json local = Json::array();
    for (std::size_t i = 0; i < g.local.size(); ++i)
        local.push_back({{"label", train.members[i].label}, {"n", g.local[i].n}, {"dim", g.local[i].space.dim()}});
    return {{"selected", selected},
            {"port_space", to_json(g.space)},
            {"history", history},
            {"local_spaces", local},
            {"threshold", g.threshold},
            {"initial_dim", g.initial_dim},
            {"dim", g.space.dim()},
            {"union_dim", union_dimension(g.local, train.greedy_metric)}};
}

/// Port space from either a port space file or a greedy output file.
inline PortSpace load_port_space(const std::string& path)
{
    const Json j = read_json(path);
    return port_space_from_json(j.contains("port_space") ? j["port_space"] : j);
}

// ---- layouts ----

/// {"geometries": {id: spec}, "components": [{"geometry_id", "position"}]}
inline SystemLayout layout_from_json(const Json& j)
{
    SystemLayout layout;
    for (const auto& [id, spec] : require(j, "geometries").items()) layout.geometries[id] = spec_from_json(spec);
    for (const auto& c : require(j, "components"))
        layout.components.push_back({require(c, "geometry_id").get<std::string>(), require(c, "position").get<double>()});
    return layout;
}

inline Json to_json(const SystemLayout& layout)
{
    Json geos = Json::object();
    for (const auto& [id, spec] : layout.geometries) geos[id] = to_json(spec);
    Json comps = Json::array();
    for (const auto& c : layout.components) comps.push_back({{"geometry_id", c.geometry_id}, {"position", c.position}});
    return {{"geometries", geos}, {"components", comps}};
}

// ---- matrices ----

inline void write_matrix_market(const std::string& path, const SparseMatrix& a)
{
    if (!Eigen::saveMarket(a, path)) throw Error("cannot write '" + path + "'");
}

}  // namespace portred::io
