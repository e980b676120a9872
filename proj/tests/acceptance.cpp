// Runs every acceptance criterion with pinned tolerances and prints one PASS/FAIL line each.
// Exit status is the number of failed criteria.

#include "support.hpp"

#include <chrono>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

using namespace portred;
using namespace portred::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v)
{
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

const Matrix& laplace_l2(const ComponentPairMesh& pair)
{
    static std::map<const ComponentPairMesh*, Matrix> cache;
    auto& m = cache[&pair];
    if (m.size() == 0) m = build_range_metric(PortMetricKind::l2, pair, laplace_operator());
    return m;
}

// 1: first three cosine-mode eigenvalues within 5% of cosh(j pi)^-2, spans within 5 degrees.
Outcome analytic_eigenvalues()
{
    const auto start = std::chrono::steady_clock::now();
    const auto pair = rect_pair(40, 40);
    const auto ctx = make_transfer_context(pair, laplace_operator(), PortMetricKind::l2);
    const auto eigs = transfer_eigs(ctx, 10);
    const auto exact = oracle::analytic_eigenvalues({1.0, 1.0}, 4);
    bool ok = true;
    std::string detail = "rel err";
    for (int k = 1; k <= 3; ++k) {
        const double rel = std::abs(eigs.values(k - 1) - exact[static_cast<std::size_t>(k)]) / exact[static_cast<std::size_t>(k)];
        ok = ok && rel <= 0.05;
        detail += " j" + std::to_string(k) + "=" + fmt(rel);
    }
    std::vector<double> x2;
    for (int n : pair.gamma_in_nodes()) x2.push_back(pair.mesh().nodes[static_cast<std::size_t>(n)][1]);
    const Matrix analytic = oracle::analytic_modes({1.0, 1.0}, 3, x2);
    double worst = 0.0;
    for (int j = 1; j <= 3; ++j) {
        const Vector angles = principal_angles(eigs.modes.leftCols(j), analytic.leftCols(j), laplace_l2(pair));
        worst = std::max(worst, angles.maxCoeff() * 180.0 / std::numbers::pi);
    }
    ok = ok && worst <= 5.0;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ok = ok && secs <= 60.0;
    return {ok, detail + "; max angle " + fmt(worst) + " deg; " + fmt(secs) + " s"};
}

// 2: log lambda_j affine in j = 2..6 with slope within 15% of -2 pi L / H.
Outcome exponential_decay()
{
    const auto pair = rect_pair(40, 40);
    const auto ctx = make_transfer_context(pair, laplace_operator(), PortMetricKind::l2);
    const auto eigs = transfer_eigs(ctx, 10);
    // analytic index j = 2..6 are the cosine modes k = 1..5
    Eigen::MatrixXd a(5, 2);
    Eigen::VectorXd y(5);
    for (int j = 2; j <= 6; ++j) {
        if (!(eigs.values(j - 2) > 0.0)) return {false, "lambda_" + std::to_string(j) + " vanished"};
        a(j - 2, 0) = j;
        a(j - 2, 1) = 1.0;
        y(j - 2) = std::log(eigs.values(j - 2));
    }
    const Eigen::Vector2d fit = a.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd res = y - a * fit;
    const double r2 = 1.0 - res.squaredNorm() / (y.array() - y.mean()).matrix().squaredNorm();
    const double reference = -2.0 * std::numbers::pi;
    const double rel = std::abs(fit(0) / reference - 1.0);
    return {rel <= 0.15, "slope " + fmt(fit(0)) + " vs " + fmt(reference) + " (rel " + fmt(rel) + "), R^2 " + fmt(r2)};
}

// 3: reduced(m = N_in) == full port == monolithic on Laplace and elasticity pairs.
Outcome full_space_exactness()
{
    const auto start = std::chrono::steady_clock::now();
    struct Case {
        std::string label;
        ComponentPairMesh pair;
        OperatorSpec op;
    };
    std::vector<Case> cases = {
        {"laplace", rect_pair(8, 8), laplace_operator()},
        {"laplace-crack", rect_pair(8, 8, 1.0, 1.0, Crack{CrackEdge::top, 0.5, 0.5}), laplace_operator()},
        {"elasticity", rect_pair(8, 8), elasticity_operator()},
        {"beam", beam_pair({}, 20, 4), elasticity_operator()},
        {"beam-crack", beam_pair(center_crack(), 20, 4), elasticity_operator()},
        {"beam-hole", beam_pair(Hole{{0.5, 0.5}, {0.1, 0.25}}, 20, 4), elasticity_operator()},
    };
    double worst_red = 0.0, worst_mono = 0.0;
    for (const auto& c : cases) {
        const auto sys = random_system(c.pair, c.op, 17);
        const auto s = condense(sys, c.pair.partition(c.op.dofs_per_node()));
        const auto full = solve_full_port(s);
        const auto red = solve_reduced(s, Matrix(Matrix::Identity(s.port_dofs(), s.port_dofs())));
        worst_red = std::max(worst_red, rel_diff(red.full, full.full));
        worst_mono = std::max(worst_mono, rel_diff(full.full, dense_solve(sys)));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {worst_red <= 1e-10 && worst_mono <= 1e-10 && secs <= 30.0,
            "reduced vs full " + fmt(worst_red) + ", full vs monolithic " + fmt(worst_mono) + " over " +
                std::to_string(cases.size()) + " pairs; " + fmt(secs) + " s"};
}

// 4: relative energy error <= C sqrt(lambda_{n+1}) with one C <= 10 for n = 1..6, 20 realizations.
Outcome a_priori_bound()
{
    const auto pair = rect_pair(20, 40, 0.5, 1.0);
    const auto op = laplace_operator();
    const auto ctx = make_transfer_context(pair, op, PortMetricKind::lifting);
    const auto eigs = transfer_eigs(ctx);
    const PortSpace space = optimal_space(ctx, eigs, std::nullopt, 6);
    std::vector<Matrix> bases;
    for (int n = 1; n <= 6; ++n) bases.push_back(space.leading(n + 1).basis);
    const auto errors = experiments::random_bc_errors(pair, op, bases, 20, 4242, 5.0);
    double c_max = 0.0, c_mean = 0.0;
    for (int n = 1; n <= 6; ++n) {
        const double s = std::sqrt(eigs.values(n));
        if (!(s > 0.0)) return {false, "lambda_" + std::to_string(n + 1) + " vanished"};
        std::vector<double> col;
        for (const auto& row : errors) col.push_back(row[static_cast<std::size_t>(n - 1)]);
        c_max = std::max(c_max, *std::max_element(col.begin(), col.end()) / s);
        c_mean = std::max(c_mean, experiments::mean(col) / s);
    }
    return {c_max <= 10.0, "fitted C " + fmt(c_max) + " (max over realizations), " + fmt(c_mean) + " (mean)"};
}

// 5: pristine elasticity basis on cracked / shifted-crack / holed beams: mean error <= 1e-3 at 6 modes.
Outcome reuse_study()
{
    const auto start = std::chrono::steady_clock::now();
    const auto op = elasticity_operator();
    const auto reference = beam_pair();
    const auto ctx = make_transfer_context(reference, op, PortMetricKind::lifting);
    const auto eigs = transfer_eigs(ctx);
    const PortSpace space = optimal_space(ctx, eigs, std::nullopt, 3);
    if (space.dim() != 6) return {false, "pristine space has dimension " + std::to_string(space.dim())};
    bool ok = true;
    std::string detail;
    std::map<std::string, double> means;
    for (const auto& [label, defect] : std::vector<std::pair<std::string, Defect>>{
             {"crack", center_crack()}, {"shifted_crack", shifted_crack()}, {"hole", center_hole()}}) {
        const auto errors = experiments::random_bc_errors(beam_pair(defect), op, {space.basis}, 20, 2024, 5.0);
        std::vector<double> col;
        for (const auto& row : errors) col.push_back(row[0]);
        means[label] = experiments::mean(col);
        ok = ok && means[label] <= 1e-3;
        detail += label + "=" + fmt(means[label]) + " ";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ok = ok && secs <= 300.0;
    return {ok, "mean rel error at 6 modes: " + detail + "; " + fmt(secs) + " s"};
}

// Deviations of every member against `basis`, recomputed independently of the greedy loop.
std::vector<double> independent_deviations(const GreedyResult& g, const Matrix& basis, const Matrix& metric)
{
    std::vector<double> out;
    for (const auto& local : g.local) {
        // worst direction of the coefficient ball: largest eigenvalue of the residual Gram
        Matrix residual(local.frame.rows(), local.frame.cols());
        for (Eigen::Index k = 0; k < local.frame.cols(); ++k) {
            if (basis.cols() == 0) {
                residual.col(k) = local.frame.col(k);
                continue;
            }
            const Matrix gram = basis.transpose() * metric * basis;
            residual.col(k) = local.frame.col(k) - basis * gram.ldlt().solve(basis.transpose() * (metric * local.frame.col(k)));
        }
        const Matrix z = residual.transpose() * metric * residual;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(z);
        out.push_back(z.size() == 0 ? 0.0 : std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff())));
    }
    return out;
}

TrainingSet beam_family()
{
    const auto op = elasticity_operator();
    std::vector<TrainingMember> members;
    members.push_back(make_training_member("beam", beam_pair(), op));
    members.push_back(make_training_member("hole", beam_pair(center_hole()), op));
    members.push_back(make_training_member("crack", beam_pair(center_crack()), op));
    return make_training_set(std::move(members), PortMetricKind::l2);
}

// 6: certificate, monotone deviations, singleton bound, greedy < union at eps = 1e-2.
Outcome greedy_properties()
{
    const auto train = beam_family();
    bool certificate = true, monotone = true, singleton = true;
    std::string dims;
    for (double eps : {1e-2, 1e-4, 2e-7}) {
        const auto g = spectral_greedy(train, eps);
        for (double d : independent_deviations(g, g.space.basis, train.greedy_metric))
            certificate = certificate && d <= g.threshold * (1.0 + 1e-10);
        for (std::size_t it = 1; it < g.history.size(); ++it)
            for (std::size_t i = 0; i < g.history[it].deviations.size(); ++i)
                monotone = monotone && g.history[it].deviations[i] <= g.history[it - 1].deviations[i] * (1.0 + 1e-10) + 1e-14;
        dims += " eps=" + fmt(eps) + ":" + std::to_string(g.space.dim()) + "/" +
                std::to_string(union_dimension(g.local, train.greedy_metric));
        for (int i = 0; i < train.size(); ++i) {
            const auto single = make_training_set({train.members[static_cast<std::size_t>(i)]}, PortMetricKind::l2);
            const auto gs = spectral_greedy(single, eps);
            singleton = singleton && gs.space.dim() <= gs.local.front().space.dim();
        }
    }
    const auto g = spectral_greedy(train, 1e-2);
    const int udim = union_dimension(g.local, train.greedy_metric);
    const bool strict = g.space.dim() < udim;
    return {certificate && monotone && singleton && strict,
            std::string("(a) ") + (certificate ? "ok" : "FAIL") + " (b) " + (monotone ? "ok" : "FAIL") + " (c) " +
                (singleton ? "ok" : "FAIL") + " (d) greedy " + std::to_string(g.space.dim()) + " < union " + std::to_string(udim) +
                "; greedy/union dims" + dims};
}

// 7: Delta >= gradient error for all m, Delta^{N_in} = 0, Spearman >= 0.9.
Outcome estimator_bound()
{
    using io::Json;
    auto rect = [](double x0, double w, int nx, int ny) {
        return Json{{"origin", {x0, 0.0}}, {"width", w}, {"height", 1.0}, {"nx", nx}, {"ny", ny}};
    };
    const std::vector<std::pair<std::string, Json>> cases = {
        {"laplace", {{"experiment", "estimator_study"}, {"operator", "laplace"}, {"seed", 11}, {"effectivity", true},
                     {"pair", {{"omega1", rect(-0.25, 0.25, 5, 20)}, {"omega2", rect(0.0, 0.25, 5, 20)}}}}},
        {"elasticity", {{"experiment", "estimator_study"}, {"operator", "elasticity"}, {"seed", 11}, {"effectivity", true},
                        {"pair", {{"omega1", rect(-1.0, 1.0, 10, 10)}, {"omega2", rect(0.0, 1.0, 10, 10)}}}}},
    };
    bool ok = true;
    std::string detail;
    for (const auto& [label, cfg] : cases) {
        const auto r = experiments::run_estimator_study(cfg);
        const auto& rows = r.tables.front().rows;
        const double delta_first = std::stod(rows.front()[1]);
        const double delta_last = std::stod(rows.back()[1]);
        const double rho = r.summary["spearman"].get<double>();
        double min_eff = std::numeric_limits<double>::infinity();
        for (const auto& row : rows)
            if (std::stod(row[3]) > 0.0 && std::stod(row[4]) > 1e-9) min_eff = std::min(min_eff, std::stod(row[5]));
        const bool zero_at_full = delta_last <= 1e-10 * std::max(1.0, delta_first);
        ok = ok && r.passed && zero_at_full && rho >= 0.9;
        detail += label + ": bound " + (r.passed ? "holds" : "VIOLATED") + ", min effectivity " + fmt(min_eff) + ", Delta^N " +
                  fmt(delta_last) + ", spearman " + fmt(rho) + "; ";
    }
    return {ok, detail};
}

// 8: 4-component chain: full spaces == monolithic; greedy with N_Gamma = 3 keeps error <= eps.
Outcome multi_component()
{
    const auto op = laplace_operator();
    const ComponentSpec unit{{0.0, 0.0}, 1.0, 1.0, 10, 10, {}};
    const auto layout = experiments::uniform_chain(unit, 4);
    double worst_full = 0.0;
    for (int r = 0; r < 3; ++r) {
        const auto sys = experiments::random_chain_system(layout, op, 99, r, 5.0);
        worst_full = std::max(worst_full, rel_diff(solve_chain_full(sys).full, solve_chain_monolithic(sys)));
    }
    ComponentSpec right = unit;
    right.origin[0] = 1.0;
    const auto pair = join_pair(build_component_mesh(unit), build_component_mesh(right));
    const auto train = make_training_set({make_training_member("unit", pair, op)}, PortMetricKind::l2);
    bool ok = worst_full <= 1e-10;
    std::string detail = "full vs monolithic " + fmt(worst_full);
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        const auto g = scaled_tolerance_greedy(train, eps, 3);
        double worst = 0.0;
        for (int r = 0; r < 5; ++r) {
            const auto sys = experiments::random_chain_system(layout, op, 99, r, 5.0);
            const auto full = solve_chain_full(sys);
            const auto red = solve_chain(sys, std::vector<Matrix>(3, g.space.basis));
            worst = std::max(worst, energy_error(full.full, red.full, assemble_stiffness(sys.chain.mesh, op)));
        }
        ok = ok && worst <= eps;
        detail += "; eps=" + fmt(eps) + " m=" + std::to_string(g.space.dim()) + " max rel error " + fmt(worst);
    }
    return {ok, detail};
}

// 9: eigen-based deviation >= Monte-Carlo supremum over 1e4 samples, within 2% for dim <= 7.
Outcome deviation_oracle()
{
    const auto train = beam_family();
    const auto g = spectral_greedy(train, 1e-2);
    const Matrix& metric = train.greedy_metric;
    bool ok = true;
    double worst_gap = 0.0;
    int cases = 0;
    std::uint64_t seed = 7;
    // compare at every intermediate greedy basis
    for (std::size_t step = 0; step < g.history.size(); ++step) {
        const Matrix basis = g.space.basis.leftCols(g.history[step].basis_dim);
        for (const auto& local : g.local) {
            if (local.frame.cols() > 7) continue;
            const auto d = deviation(local.frame, basis, metric).value;
            const double mc = monte_carlo_deviation(local.frame, basis, metric, 10000, seed++);
            if (d == 0.0 && mc == 0.0) continue;
            ++cases;
            ok = ok && d >= mc * (1.0 - 1e-10);
            const double gap = (d - mc) / d;
            worst_gap = std::max(worst_gap, gap);
            ok = ok && gap <= 0.02;
        }
    }
    ok = ok && cases > 0;
    return {ok, std::to_string(cases) + " cases, largest relative gap " + fmt(worst_gap)};
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"analytic eigenvalue match", analytic_eigenvalues},
        {"exponential decay", exponential_decay},
        {"full-space exactness", full_space_exactness},
        {"a priori bound", a_priori_bound},
        {"reuse study", reuse_study},
        {"greedy properties", greedy_properties},
        {"estimator bound", estimator_bound},
        {"multi-component consistency", multi_component},
        {"brute-force deviation oracle", deviation_oracle},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << i + 1 << " " << criteria[i].first << ": " << o.detail << std::endl;
    }
    std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed;
}
