#pragma once

#include "portred/io.hpp"
#include "portred/oracle.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

namespace portred::experiments {

using io::Json;

// ---- execution helpers ----

/// Worker count: PORTRED_THREADS when set, otherwise the hardware concurrency.
inline int thread_count()
{
    if (const char* env = std::getenv("PORTRED_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Results must be written to per-index slots so that the
/// aggregation order does not depend on scheduling. The first exception is rethrown.
template <typename Fn>
void parallel_for(int n, Fn&& fn)
{
    const int workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Per-DOF i.i.d. uniform data on [-amplitude, amplitude]; the stream depends only on
/// (seed, realization).
inline Vector random_data(int size, std::uint64_t seed, int realization, double amplitude)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(realization)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> dist(-amplitude, amplitude);
    Vector v(size);
    for (int i = 0; i < size; ++i) v(i) = dist(rng);
    return v;
}

/// Dirichlet map with `outer` on Gamma_out (in partition order) and zero on Sigma_D.
inline std::map<int, double> dirichlet_map(const DofPartition& part, const Vector& outer)
{
    if (outer.size() != static_cast<Eigen::Index>(part.gamma_out.size())) throw Error("outer data does not match Gamma_out");
    std::map<int, double> d;
    for (std::size_t k = 0; k < part.gamma_out.size(); ++k) d[part.gamma_out[k]] = outer(static_cast<Eigen::Index>(k));
    for (int dof : part.dirichlet) d[dof] = 0.0;
    return d;
}

inline std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// ---- tables ----

struct Table {
    std::string name;
    std::vector<std::string> meta;  // written as '# ' comment lines
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row)
    {
        if (row.size() != columns.size()) throw Error("table row width does not match the header of '" + name + "'");
        rows.push_back(std::move(row));
    }

    [[nodiscard]] std::string csv() const
    {
        std::string out;
        for (const auto& m : meta) out += "# " + m + "\n";
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
            out += "\n";
        };
        line(columns);
        for (const auto& r : rows) line(r);
        return out;
    }
};

struct StudyResult {
    std::vector<Table> tables;
    Json summary = Json::object();
    bool passed = true;  // false when a built-in assertion of the experiment failed
    std::vector<std::string> failures;
};

inline std::string mesh_description(const ComponentPairMesh& pair)
{
    const auto& m = pair.mesh();
    return std::to_string(m.num_nodes()) + " nodes/" + std::to_string(m.num_elements()) + " elements";
}

inline std::vector<std::string> table_meta(const Json& config, const std::string& mesh, const std::string& metrics)
{
    return {"config_hash=" + hex(fnv1a(config.dump())), "seed=" + std::to_string(config.value("seed", 0ull)), "mesh=" + mesh,
            "metrics=" + metrics};
}

// ---- shared protocol pieces ----

/// Relative energy errors of the reduced solutions in each basis, per realization of random
/// Gamma_out data: errors[realization][basis].
inline std::vector<std::vector<double>> random_bc_errors(const ComponentPairMesh& pair, const OperatorSpec& op,
                                                         const std::vector<Matrix>& bases, int realizations,
                                                         std::uint64_t seed, double amplitude)
{
    if (realizations < 1) throw Error("realization count must be >= 1");
    const auto part = pair.partition(op.dofs_per_node());
    const auto base = homogeneous_system(pair, op);
    const auto schur = condense(base, part);
    std::vector<std::vector<double>> errors(static_cast<std::size_t>(realizations));
    parallel_for(realizations, [&](int r) {
        const Vector g = random_data(static_cast<int>(part.gamma_out.size()), seed, r, amplitude);
        const auto sys = apply_dirichlet(base.raw_stiffness, Vector::Zero(part.num_dofs), dirichlet_map(part, g));
        const auto s = recondense_rhs(schur, sys);
        const auto full = solve_full_port(s);
        auto& row = errors[static_cast<std::size_t>(r)];
        for (const auto& b : bases) row.push_back(energy_error(full.full, solve_reduced(s, b).full, sys.raw_stiffness));
    });
    return errors;
}

inline double mean(const std::vector<double>& v)
{
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Full L2-orthonormal port frame ordered kernel, data, spectral (nonzero eigenvalues), then
/// the completion.
inline Matrix estimator_frame(const TransferContext& ctx, const TransferEigs& eigs, const std::optional<Vector>& data)
{
    const Matrix l2 = build_range_metric(PortMetricKind::l2, ctx.pair, ctx.op);
    int n = 0;
    while (n < eigs.count() && eigs.values(n) > 0.0) ++n;
    n = std::min(n, ctx.port_dofs());
    const PortSpace space = optimal_space(eigs, kernel_traces(ctx), data, n, l2, PortMetricKind::l2);
    return complete_port_frame(space.basis, l2);
}

// ---- experiments ----

inline std::vector<int> int_list(const Json& j, const char* key, std::vector<int> fallback)
{
    return j.contains(key) ? j[key].get<std::vector<int>>() : fallback;
}

inline StudyResult run_eig_decay(const Json& cfg)
{
    const auto op = io::operator_from_json(cfg.value("operator", Json("laplace")));
    const auto pair = io::pair_from_json(io::require(cfg, "pair"));
    const auto metric = io::metric_from_name(cfg.value("metric", std::string("l2")));
    const int count = cfg.value("count", 10);
    const auto ctx = make_transfer_context(pair, op, metric);
    const auto eigs = transfer_eigs(ctx, count);

    std::optional<oracle::AnalyticConfig> analytic;
    if (cfg.contains("analytic")) analytic = oracle::AnalyticConfig{cfg["analytic"].value("H", 1.0), cfg["analytic"].value("L", 1.0)};

    StudyResult out;
    Table t{"eig_decay", table_meta(cfg, mesh_description(pair), std::string("source=l2_avg range=") + to_string(metric)),
            {"j", "lambda", "sqrt_lambda", "analytic_lambda"}, {}};
    // the analytic list starts with the x1-linear mode, which the kernel projection removes
    const auto reference = analytic ? oracle::analytic_eigenvalues(*analytic, eigs.count() + 1) : std::vector<double>{};
    for (int j = 0; j < eigs.count(); ++j) {
        t.add({std::to_string(j + 1), num(eigs.values(j)), num(std::sqrt(eigs.values(j))),
               analytic ? num(reference[static_cast<std::size_t>(j + 1)]) : std::string("")});
    }
    out.summary["eigenvalues"] = std::vector<double>(eigs.values.data(), eigs.values.data() + eigs.values.size());
    out.tables.push_back(std::move(t));
    return out;
}

inline StudyResult run_reuse_study(const Json& cfg)
{
    const auto op = io::operator_from_json(cfg.value("operator", Json("elasticity")));
    const auto reference = io::pair_from_json(io::require(cfg, "reference"));
    const auto metric = io::metric_from_name(cfg.value("metric", std::string("lifting")));
    const int realizations = cfg.value("realizations", 20);
    const auto seed = cfg.value("seed", std::uint64_t{1});
    const double amplitude = cfg.value("amplitude", 5.0);
    const auto ns = int_list(cfg, "n", {0, 1, 2, 3, 4, 5, 6, 8, 10});

    const auto ctx = make_transfer_context(reference, op, metric);
    const auto eigs = transfer_eigs(ctx);
    const int n_max = *std::max_element(ns.begin(), ns.end());
    const PortSpace space = optimal_space(ctx, eigs, std::nullopt, n_max);
    std::vector<Matrix> bases;
    std::vector<int> dims;
    for (int n : ns) {
        const int dim = std::min(space.dim(), n + op.kernel_dim());
        dims.push_back(dim);
        bases.push_back(space.leading(dim).basis);
    }

    StudyResult out;
    Table t{"reuse_study", table_meta(cfg, mesh_description(reference), std::string("construction=") + to_string(metric)),
            {"geometry", "n", "dim", "mean_rel_error", "max_rel_error", "sqrt_lambda_next"}, {}};
    auto targets = io::require(cfg, "targets");
    for (const auto& target : targets) {
        const std::string label = io::require(target, "label").get<std::string>();
        const auto pair = io::pair_from_json(target);
        if (static_cast<int>(pair.partition(op.dofs_per_node()).gamma_in.size()) != ctx.port_dofs())
            throw Error("target '" + label + "' has a different port DOF count than the reference pair");
        const auto errors = random_bc_errors(pair, op, bases, realizations, seed, amplitude);
        Json per_dim = Json::array();
        for (std::size_t b = 0; b < bases.size(); ++b) {
            std::vector<double> col;
            for (const auto& row : errors) col.push_back(row[b]);
            const int n = ns[b];
            const double next = n < eigs.count() ? std::sqrt(eigs.values(n)) : 0.0;
            t.add({label, std::to_string(n), std::to_string(dims[b]), num(mean(col)), num(*std::max_element(col.begin(), col.end())),
                   num(next)});
            per_dim.push_back({{"n", n}, {"dim", dims[b]}, {"mean_rel_error", mean(col)}});
        }
        out.summary[label] = per_dim;
    }
    out.tables.push_back(std::move(t));
    return out;
}

inline GreedyConstants constants_from_json(const Json& cfg)
{
    GreedyConstants c;
    if (!cfg.contains("constants")) return c;
    const Json& j = cfg["constants"];
    c.c1 = j.value("c1", 1.0);
    c.c2 = j.value("c2", 1.0);
    c.big_c1 = j.value("C1", 1.0);
    c.big_c2 = j.value("C2", 1.0);
    return c;
}

/// Training set from {"operator", "members": [{"label", "omega1", "omega2"}], metrics}.
inline TrainingSet training_set_from_json(const Json& cfg)
{
    const auto op = io::operator_from_json(cfg.value("operator", Json("elasticity")));
    const auto construction = io::metric_from_name(cfg.value("construction_metric", std::string("lifting")));
    const auto greedy_metric = io::metric_from_name(cfg.value("greedy_metric", std::string("l2")));
    const auto& members_json = io::require(cfg, "members");
    std::vector<TrainingMember> members(members_json.size());
    parallel_for(static_cast<int>(members_json.size()), [&](int i) {
        const auto& m = members_json[static_cast<std::size_t>(i)];
        members[static_cast<std::size_t>(i)] =
            make_training_member(m.value("label", "member" + std::to_string(i)), io::pair_from_json(m), op, construction);
    });
    return make_training_set(std::move(members), greedy_metric);
}

inline StudyResult run_greedy_study(const Json& cfg)
{
    const auto train = training_set_from_json(cfg);
    const auto consts = constants_from_json(cfg);
    const int multiplicity = cfg.value("multiplicity", 1);
    const auto eps_list = cfg.contains("eps") ? cfg["eps"].get<std::vector<double>>() : std::vector<double>{1e-2, 1e-4, 2e-7};
    const double scale = 2.0 * consts.big_c2 * consts.c1 * consts.c2 * multiplicity;

    StudyResult out;
    const auto meta = table_meta(cfg, mesh_description(train.members.front().ctx->pair),
                                 std::string("construction=") + to_string(train.members.front().ctx->range_kind) +
                                     " greedy=" + to_string(train.greedy_kind));
    Table dims{"greedy_study", meta, {"eps", "greedy_dim", "union_dim", "sum_local_dims", "max_local_dim", "first_selections"}, {}};
    Table hist{"greedy_history", meta, {"eps", "iteration", "basis_dim", "geometry", "deviation", "scaled_deviation", "chosen"}, {}};
    Table local{"greedy_local", meta, {"eps", "geometry", "n", "dim", "two_sqrt_lambda_next"}, {}};
    Json runs = Json::array();
    for (double eps : eps_list) {
        const auto g = spectral_greedy(train, eps, consts, multiplicity);
        int sum = 0, largest = 0;
        for (std::size_t i = 0; i < g.local.size(); ++i) {
            const auto& l = g.local[i];
            sum += l.space.dim();
            largest = std::max(largest, l.space.dim());
            const auto& lam = train.members[i].eigs.values;
            const double next = l.n < lam.size() ? 2.0 * std::sqrt(lam(l.n)) : 0.0;
            local.add({num(eps), train.members[i].label, std::to_string(l.n), std::to_string(l.space.dim()), num(next)});
        }
        std::string first;
        for (std::size_t k = 0; k < std::min<std::size_t>(3, g.selected.size()); ++k)
            first += (k ? ";" : "") + train.members[static_cast<std::size_t>(g.selected[k])].label;
        const int udim = union_dimension(g.local, train.greedy_metric);
        dims.add({num(eps), std::to_string(g.space.dim()), std::to_string(udim), std::to_string(sum), std::to_string(largest), first});
        for (const auto& h : g.history) {
            for (std::size_t i = 0; i < h.deviations.size(); ++i) {
                const double d = h.deviations[i];
                hist.add({num(eps), std::to_string(h.iteration), std::to_string(h.basis_dim), train.members[i].label, num(d),
                          num(d < 1.0 ? scale * d / (1.0 - d) : std::numeric_limits<double>::infinity()),
                          h.chosen == static_cast<int>(i) ? "1" : "0"});
            }
        }
        Json run = io::to_json(g, train);
        run["eps"] = eps;
        run.erase("port_space");
        runs.push_back(run);
    }
    out.summary["runs"] = runs;
    out.tables = {dims, hist, local};
    return out;
}

inline StudyResult run_estimator_study(const Json& cfg)
{
    const auto op = io::operator_from_json(cfg.value("operator", Json("laplace")));
    const auto pair = io::pair_from_json(io::require(cfg, "pair"));
    const auto metric = io::metric_from_name(cfg.value("metric", std::string("lifting")));
    const auto seed = cfg.value("seed", std::uint64_t{1});
    const int realization = cfg.value("realization", 0);
    const double amplitude = cfg.value("amplitude", 5.0);
    const bool effectivity = cfg.value("effectivity", true);
    const double floor = cfg.value("error_floor", 1e-9);

    const auto ctx = make_transfer_context(pair, op, metric);
    const auto eigs = transfer_eigs(ctx);
    const Matrix frame = estimator_frame(ctx, eigs, std::nullopt);
    const auto consts = compute_constants(pair, op, effectivity);

    const auto part = ctx.partition;
    const Vector g = random_data(static_cast<int>(part.gamma_out.size()), seed, realization, amplitude);
    const auto sys = assemble(pair, op, nullptr, dirichlet_map(part, g));
    const auto s = condense(sys, part);
    const auto full = solve_full_port(s);
    const SparseMatrix grad = assemble_gradient_gram(pair.mesh(), op.dofs_per_node());
    const double grad_norm = std::sqrt(full.full.dot(grad * full.full));

    std::vector<int> ms;
    if (cfg.contains("m"))
        ms = cfg["m"].get<std::vector<int>>();
    else
        for (int m = 0; m <= ctx.port_dofs(); ++m) ms.push_back(m);

    StudyResult out;
    Table t{"estimator_study", table_meta(cfg, mesh_description(pair), "frame=l2 construction=" + std::string(to_string(metric))),
            {"m", "delta", "flux_jump_norm", "gradient_error", "rel_energy_error", "effectivity", "effectivity_bound"}, {}};
    std::vector<double> deltas, errs;
    const double bound = effectivity ? consts.effectivity_bound() : 0.0;
    for (int m : ms) {
        if (m < 0 || m > ctx.port_dofs()) throw Error("m outside [0, N_in]");
        const auto red = solve_reduced(s, Matrix(frame.leftCols(m)));
        const auto jump = flux_jump(s, frame, m, red.port);
        const double delta = estimate(jump, consts);
        const double err = gradient_error(full.full, red.full, grad);
        const double rel = energy_error(full.full, red.full, sys);
        // roundoff floor: both sides can sit at machine precision once the space is complete
        if (delta < err - 1e-12 * grad_norm) {
            out.passed = false;
            out.failures.push_back("estimator below the true error at m=" + std::to_string(m) + ": " + num(delta) + " < " + num(err));
        }
        if (rel > floor) {
            deltas.push_back(delta);
            errs.push_back(err);
        }
        t.add({std::to_string(m), num(delta), num(jump.norm), num(err), num(rel), num(err > 0.0 ? delta / err : 0.0),
               effectivity ? num(bound) : std::string("")});
    }
    out.summary["constants"] = {{"trace", consts.trace}, {"poincare", consts.poincare}, {"alpha_h", consts.alpha_h},
                                {"alpha_app", consts.alpha_app}};
    if (consts.effectivity) {
        const auto& e = *consts.effectivity;
        out.summary["constants"]["gamma_h"] = e.gamma_h;
        out.summary["constants"]["c_h"] = e.c_h;
        out.summary["constants"]["c_a"] = e.c_a;
        out.summary["effectivity_bound"] = bound;
    }
    out.summary["spearman"] = deltas.size() >= 2 ? spearman(deltas, errs) : 1.0;
    out.summary["spearman_points"] = deltas.size();
    out.tables.push_back(std::move(t));
    return out;
}

/// Chain of `count` copies of one geometry placed left to right from its origin.
inline SystemLayout uniform_chain(const ComponentSpec& spec, int count, const std::string& id = "component")
{
    SystemLayout layout;
    layout.geometries[id] = spec;
    for (int c = 0; c < count; ++c) layout.components.push_back({id, spec.origin[0] + c * spec.width});
    return layout;
}

/// Random end data for a chain, drawn from the same stream layout as pair studies.
inline ChainSystem random_chain_system(const SystemLayout& layout, const OperatorSpec& op, std::uint64_t seed, int realization,
                                       double amplitude)
{
    const int dpn = op.dofs_per_node();
    const auto first = build_component_mesh(placed_spec(layout, 0));
    const auto last = build_component_mesh(placed_spec(layout, layout.num_components() - 1));
    const int nl = static_cast<int>(first.left_edge.size()) * dpn;
    const int nr = static_cast<int>(last.right_edge.size()) * dpn;
    const Vector g = random_data(nl + nr, seed, realization, amplitude);
    return build_chain_system(layout, op, g.head(nl), g.tail(nr));
}

inline StudyResult run_system_study(const Json& cfg)
{
    const auto op = io::operator_from_json(cfg.value("operator", Json("laplace")));
    const ComponentSpec spec = io::spec_from_json(io::require(cfg, "component"));
    const int count = cfg.value("components", 4);
    const double eps = io::require(cfg, "eps").get<double>();
    const auto seed = cfg.value("seed", std::uint64_t{1});
    const int realizations = cfg.value("realizations", 5);
    const double amplitude = cfg.value("amplitude", 5.0);
    const auto construction = io::metric_from_name(cfg.value("construction_metric", std::string("lifting")));
    const auto greedy_metric = io::metric_from_name(cfg.value("greedy_metric", std::string("l2")));
    const auto multiplicities = int_list(cfg, "multiplicities", {1, count - 1});
    const bool with_estimate = cfg.value("estimate", true);

    const auto layout = uniform_chain(spec, count);
    ComponentSpec right = spec;
    right.origin[0] += spec.width;
    const auto pair = join_pair(build_component_mesh(spec), build_component_mesh(right));
    const auto train = make_training_set({make_training_member("component", pair, op, construction)}, greedy_metric);

    StudyResult out;
    Table t{"system_study", table_meta(cfg, std::to_string(count) + "x" + std::to_string(spec.nx) + "x" + std::to_string(spec.ny),
                                       std::string("construction=") + to_string(construction) + " greedy=" + to_string(greedy_metric)),
            {"multiplicity", "dim", "realization", "rel_energy_error", "gradient_error", "delta", "worst_port"}, {}};
    std::optional<EstimatorConstants> consts;
    for (int mult : multiplicities) {
        const auto g = scaled_tolerance_greedy(train, eps, mult, constants_from_json(cfg));
        std::vector<double> errs(static_cast<std::size_t>(realizations));
        for (int r = 0; r < realizations; ++r) {
            const auto sys = random_chain_system(layout, op, seed, r, amplitude);
            if (with_estimate && !consts) consts = compute_chain_constants(sys);
            const auto full = solve_chain_full(sys);
            const auto red = solve_chain(sys, std::vector<Matrix>(static_cast<std::size_t>(sys.num_ports()), g.space.basis));
            const SparseMatrix raw = assemble_stiffness(sys.chain.mesh, op);
            const SparseMatrix grad = assemble_gradient_gram(sys.chain.mesh, op.dofs_per_node());
            const double rel = energy_error(full.full, red.full, raw);
            errs[static_cast<std::size_t>(r)] = rel;
            std::string delta = "", worst = "";
            if (with_estimate) {
                const auto est = estimate_global(port_jump_norms(sys, red.ports), *consts);
                delta = num(est.delta);
                worst = std::to_string(std::max_element(est.indicators.begin(), est.indicators.end()) - est.indicators.begin());
            }
            t.add({std::to_string(mult), std::to_string(g.space.dim()), std::to_string(r), num(rel),
                   num(gradient_error(full.full, red.full, grad)), delta, worst});
        }
        out.summary["multiplicity_" + std::to_string(mult)] = {{"dim", g.space.dim()},
                                                              {"mean_rel_error", mean(errs)},
                                                              {"max_rel_error", *std::max_element(errs.begin(), errs.end())}};
    }
    out.tables.push_back(std::move(t));
    return out;
}

inline StudyResult run_experiment(const Json& cfg)
{
    const auto kind = io::require(cfg, "experiment").get<std::string>();
    if (kind == "eig_decay") return run_eig_decay(cfg);
    if (kind == "reuse_study") return run_reuse_study(cfg);
    if (kind == "greedy_study") return run_greedy_study(cfg);
    if (kind == "estimator_study") return run_estimator_study(cfg);
    if (kind == "system_study") return run_system_study(cfg);
    throw Error("unknown experiment '" + kind + "'");
}

/// Writes one CSV per table and a JSON sidecar named after the experiment.
inline void write_results(const StudyResult& result, const Json& cfg, const std::string& dir)
{
    std::filesystem::create_directories(dir);
    for (const auto& t : result.tables) {
        std::ofstream out(std::filesystem::path(dir) / (t.name + ".csv"));
        if (!out) throw Error("cannot write results to '" + dir + "'");
        out << t.csv();
    }
    Json sidecar = {{"config", cfg},
                    {"config_hash", hex(fnv1a(cfg.dump()))},
                    {"summary", result.summary},
                    {"passed", result.passed},
                    {"failures", result.failures}};
    io::write_json((std::filesystem::path(dir) / (cfg.at("experiment").get<std::string>() + ".json")).string(), sidecar);
}

}  // namespace portred::experiments
