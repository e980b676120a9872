#include "portred/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace portred;
using io::Json;

namespace {

void emit(const Json& j, const std::string& out)
{
    if (out.empty())
        std::cout << j.dump(2) << '\n';
    else
        io::write_json(out, j);
}

OperatorSpec operator_of(const Json& j, const std::string& fallback)
{
    return io::operator_from_json(j.contains("operator") ? j["operator"] : Json(fallback));
}

/// Port basis re-orthonormalized in the L2 metric of Gamma_in, keeping the column order.
Matrix l2_basis(const Matrix& basis, const Matrix& l2)
{
    const auto o = orthonormalize(Matrix(l2.rows(), 0), basis, l2);
    for (bool k : o.kept)
        if (!k) throw Error("port basis columns are linearly dependent");
    return o.basis;
}

EstimatorConstants constants_from_file(const std::string& path)
{
    const Json j = io::read_json(path);
    EstimatorConstants c;
    c.trace = io::require(j, "trace").get<std::vector<double>>();
    c.poincare = io::require(j, "poincare").get<double>();
    c.alpha_app = io::require(j, "alpha_app").get<double>();
    c.alpha_h = j.value("alpha_h", c.alpha_app);
    return c;
}

struct Options {
    std::string spec, mesh, op = "laplace", out, sys, portspace, pair, metric = "lifting", train, layout, config, constants = "auto";
    int modes = -1, n = 20, multiplicity = 1, count = 6, realization = 0;
    double eps = 2e-7, height = 1.0, length = 1.0;
    bool constrain = false, with_estimate = false;
};

int run_mesh(const Options& o)
{
    const Json j = io::read_json(o.spec);
    if (j.contains("omega1"))
        emit(io::to_json(io::pair_from_json(j).mesh()), o.out);
    else
        emit(io::to_json(build_component_mesh(io::spec_from_json(j))), o.out);
    return 0;
}

int run_assemble(const Options& o)
{
    const auto mesh = io::mesh_from_json(io::read_json(o.mesh));
    const auto op = operator_from_name(o.op);
    SparseMatrix k = assemble_stiffness(mesh, op);
    if (o.constrain) {
        std::map<int, double> zero;
        for (const char* t : {tag::gamma_out, tag::sigma_d})
            for (int d : node_dofs(mesh.tagged(t), op.dofs_per_node())) zero[d] = 0.0;
        k = apply_dirichlet(k, Vector::Zero(k.rows()), zero).stiffness;
    }
    if (o.out.empty()) throw Error("assemble needs --out");
    io::write_matrix_market(o.out, k);
    return 0;
}

/// Pair, operator and random Gamma_out data from a system description.
struct PairProblem {
    ComponentPairMesh pair;
    OperatorSpec op;
    AssembledSystem sys;
    DofPartition part;
};

PairProblem load_problem(const std::string& path, int realization)
{
    const Json j = io::read_json(path);
    PairProblem p{io::pair_from_json(io::require(j, "pair")), operator_of(j, "laplace"), {}, {}};
    p.part = p.pair.partition(p.op.dofs_per_node());
    const Vector g = experiments::random_data(static_cast<int>(p.part.gamma_out.size()), j.value("seed", std::uint64_t{1}),
                                              realization, j.value("amplitude", 5.0));
    p.sys = assemble(p.pair, p.op, nullptr, experiments::dirichlet_map(p.part, g));
    return p;
}

int run_solve(const Options& o)
{
    const auto p = load_problem(o.sys, o.realization);
    const auto space = io::load_port_space(o.portspace);
    const int m = o.modes < 0 ? space.dim() : o.modes;
    const auto s = condense(p.sys, p.part);
    const auto full = solve_full_port(s);
    const auto red = solve_reduced(s, space.leading(m));
    emit({{"relative_energy_error", energy_error(full.full, red.full, p.sys)}, {"m", m}, {"N_in", s.port_dofs()}}, o.out);
    return 0;
}

int run_eigs(const Options& o)
{
    const Json j = io::read_json(o.pair);
    const auto pair = io::pair_from_json(j);
    const auto op = io::operator_from_json(j.contains("operator") ? j["operator"] : Json(o.op));
    const auto ctx = make_transfer_context(pair, op, io::metric_from_name(o.metric));
    const auto eigs = transfer_eigs(ctx);
    const int n = std::min(o.n, eigs.count());
    int dropped = 0;
    Json out = io::to_json(optimal_space(ctx, eigs, std::nullopt, n, &dropped));
    out["eigenvalues"] = std::vector<double>(eigs.values.data(), eigs.values.data() + eigs.values.size());
    out["dropped"] = dropped;
    emit(out, o.out);
    return 0;
}

int run_greedy(const Options& o)
{
    Json cfg = io::read_json(o.train);
    cfg["greedy_metric"] = o.metric;
    const auto train = experiments::training_set_from_json(cfg);
    const auto g = spectral_greedy(train, o.eps, experiments::constants_from_json(cfg), o.multiplicity);
    Json out = io::to_json(g, train);
    out["eps"] = o.eps;
    out["multiplicity"] = o.multiplicity;
    emit(out, o.out);
    return 0;
}

int run_estimate(const Options& o)
{
    const auto p = load_problem(o.sys, o.realization);
    const auto space = io::load_port_space(o.portspace);
    const int m = o.modes < 0 ? space.dim() : o.modes;
    const Matrix l2 = build_range_metric(PortMetricKind::l2, p.pair, p.op);
    const Matrix phi = l2_basis(space.leading(m).basis, l2);
    const Matrix frame = complete_port_frame(phi, l2);
    const auto consts = o.constants == "auto" ? compute_constants(p.pair, p.op) : constants_from_file(o.constants);
    const auto s = condense(p.sys, p.part);
    const auto full = solve_full_port(s);
    const auto red = solve_reduced(s, phi);
    const auto jump = flux_jump(s, frame, m, red.port);
    const double delta = estimate(jump, consts);
    const double err = gradient_error(full.full, red.full, assemble_gradient_gram(p.pair.mesh(), p.op.dofs_per_node()));
    emit({{"delta", delta},
          {"flux_jump_norm", jump.norm},
          {"true_error", err},
          {"effectivity", err > 0.0 ? Json(delta / err) : Json(nullptr)},
          {"m", m},
          {"constants", {{"trace", consts.trace}, {"poincare", consts.poincare}, {"alpha_app", consts.alpha_app}, {"alpha_h", consts.alpha_h}}}},
         o.out);
    return 0;
}

int run_system(const Options& o)
{
    const Json j = io::read_json(o.layout);
    const auto layout = io::layout_from_json(j);
    const auto op = operator_of(j, o.op);
    const auto space = io::load_port_space(o.portspace);
    const int m = o.modes < 0 ? space.dim() : o.modes;
    const auto sys = experiments::random_chain_system(layout, op, j.value("seed", std::uint64_t{1}), o.realization, j.value("amplitude", 5.0));
    const auto full = solve_chain_full(sys);
    const auto red = solve_chain(sys, std::vector<Matrix>(static_cast<std::size_t>(sys.num_ports()), space.leading(m).basis));
    Json out = {{"relative_energy_error", energy_error(full.full, red.full, assemble_stiffness(sys.chain.mesh, op))},
                {"m", m},
                {"ports", sys.num_ports()}};
    if (o.with_estimate) {
        const auto consts = compute_chain_constants(sys);
        const auto est = estimate_global(port_jump_norms(sys, red.ports), consts);
        out["delta"] = est.delta;
        out["indicators"] = est.indicators;
        out["true_gradient_error"] = gradient_error(full.full, red.full, assemble_gradient_gram(sys.chain.mesh, op.dofs_per_node()));
    }
    emit(out, o.out);
    return 0;
}

int run_oracle(const Options& o)
{
    const auto values = oracle::analytic_eigenvalues({o.height, o.length}, o.count);
    std::cout << "j,lambda\n";
    for (std::size_t j = 0; j < values.size(); ++j) std::cout << j + 1 << ',' << experiments::num(values[j]) << '\n';
    return 0;
}

int run_config(const Options& o)
{
    const Json cfg = io::read_json(o.config);
    const auto result = experiments::run_experiment(cfg);
    experiments::write_results(result, cfg, o.out.empty() ? "results" : o.out);
    for (const auto& f : result.failures) std::cerr << "FAILED: " << f << '\n';
    return result.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Port reduction for static condensation: meshes, transfer eigenspaces, spectral greedy, error estimation"};
    app.require_subcommand(1);
    Options o;

    auto* mesh = app.add_subcommand("mesh", "Build a component (or pair) mesh from a spec");
    mesh->add_option("--spec", o.spec, "component spec JSON")->required();
    mesh->add_option("--out", o.out, "output mesh JSON");

    auto* assemble = app.add_subcommand("assemble", "Export the stiffness matrix in Matrix Market format");
    assemble->add_option("--mesh", o.mesh, "mesh JSON")->required();
    assemble->add_option("--op", o.op, "laplace or elasticity")->check(CLI::IsMember({"laplace", "elasticity"}));
    assemble->add_option("--out", o.out, "output .mtx")->required();
    assemble->add_flag("--constrain", o.constrain, "apply zero Dirichlet rows/columns on GammaOut and SigmaD nodes");

    auto* solve_cmd = app.add_subcommand("solve", "Port-reduced solve with random outer data");
    solve_cmd->add_option("--sys", o.sys, "system JSON {operator, pair, seed, amplitude}")->required();
    solve_cmd->add_option("--portspace", o.portspace, "port space or greedy JSON")->required();
    solve_cmd->add_option("--modes", o.modes, "number of leading port modes (default: all)");
    solve_cmd->add_option("--realization", o.realization, "random data realization index");
    solve_cmd->add_option("--out", o.out, "output JSON");

    auto* eigs = app.add_subcommand("eigs", "Transfer eigenpairs and the optimal port space");
    eigs->add_option("--pair", o.pair, "pair JSON {omega1, omega2[, operator]}")->required();
    eigs->add_option("--op", o.op, "operator when the pair file has none")->check(CLI::IsMember({"laplace", "elasticity"}));
    eigs->add_option("--metric", o.metric, "range metric")->check(CLI::IsMember({"l2", "lifting"}));
    eigs->add_option("--n", o.n, "number of spectral modes");
    eigs->add_option("--out", o.out, "output JSON");

    auto* greedy = app.add_subcommand("greedy", "Spectral greedy over a training set of pairs");
    greedy->add_option("--train", o.train, "training JSON {operator, members}")->required();
    greedy->add_option("--eps", o.eps, "tolerance")->check(CLI::PositiveNumber);
    greedy->add_option("--metric", o.metric, "greedy metric")->check(CLI::IsMember({"l2", "lifting"}))->default_val("l2");
    greedy->add_option("--multiplicity", o.multiplicity, "expected number of port occurrences")->check(CLI::PositiveNumber);
    greedy->add_option("--out", o.out, "output JSON");

    auto* estimate_cmd = app.add_subcommand("estimate", "A posteriori estimate of the port reduction error");
    estimate_cmd->add_option("--sys", o.sys, "system JSON {operator, pair, seed, amplitude}")->required();
    estimate_cmd->add_option("--portspace", o.portspace, "port space or greedy JSON")->required();
    estimate_cmd->add_option("--modes", o.modes, "number of leading port modes (default: all)");
    estimate_cmd->add_option("--constants", o.constants, "auto or a constants JSON file");
    estimate_cmd->add_option("--realization", o.realization, "random data realization index");
    estimate_cmd->add_option("--out", o.out, "output JSON");

    auto* system = app.add_subcommand("system", "Port-reduced solve of a component chain");
    system->add_option("--layout", o.layout, "layout JSON {geometries, components[, operator]}")->required();
    system->add_option("--portspace", o.portspace, "port space or greedy JSON")->required();
    system->add_option("--modes", o.modes, "number of leading port modes (default: all)");
    system->add_option("--op", o.op, "operator when the layout has none")->check(CLI::IsMember({"laplace", "elasticity"}));
    system->add_option("--realization", o.realization, "random end data realization index");
    system->add_flag("--estimate", o.with_estimate, "also evaluate the global estimator");
    system->add_option("--out", o.out, "output JSON");

    auto* oracle_cmd = app.add_subcommand("oracle", "Closed-form transfer eigenvalues of the two-rectangle Laplace problem");
    oracle_cmd->add_option("--H", o.height, "height")->check(CLI::PositiveNumber);
    oracle_cmd->add_option("--L", o.length, "component length")->check(CLI::PositiveNumber);
    oracle_cmd->add_option("--count", o.count, "number of eigenvalues")->check(CLI::PositiveNumber);

    auto* run = app.add_subcommand("run", "Run an experiment config and write CSV + JSON results");
    run->add_option("--config", o.config, "experiment JSON")->required();
    run->add_option("--out", o.out, "output directory");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*mesh) return run_mesh(o);
        if (*assemble) return run_assemble(o);
        if (*solve_cmd) return run_solve(o);
        if (*eigs) return run_eigs(o);
        if (*greedy) return run_greedy(o);
        if (*estimate_cmd) return run_estimate(o);
        if (*system) return run_system(o);
        if (*oracle_cmd) return run_oracle(o);
        if (*run) return run_config(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
