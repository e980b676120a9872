#include "support.hpp"

#include <gtest/gtest.h>

using namespace portred;
using namespace portred::testing;

namespace {

const ComponentSpec unit{{0.0, 0.0}, 1.0, 1.0, 5, 5, {}};

SystemLayout mixed_layout()
{
    SystemLayout layout;
    layout.geometries["plain"] = unit;
    ComponentSpec cracked = unit;
    cracked.defect = Crack{CrackEdge::bottom, 0.4, 0.6};
    layout.geometries["cracked"] = cracked;
    layout.components = {{"plain", 0.0}, {"cracked", 1.0}, {"plain", 2.0}};
    return layout;
}

}  // namespace

TEST(System, CondensedComponentMatchesDenseSchur)
{
    const auto op = laplace_operator();
    const auto c = condense_component(unit, op);
    const Matrix a = Matrix(assemble_stiffness(c.mesh, op));
    EXPECT_EQ(c.left_size, 6);
    ASSERT_EQ(c.boundary.size(), 12u);
    const auto interior = c.interior.dofs;
    const Matrix schur = a(c.boundary, c.boundary) - a(c.boundary, interior) * a(interior, interior).ldlt().solve(a(interior, c.boundary));
    EXPECT_LT((c.schur - schur).norm(), 1e-10 * schur.norm());
    // constants are in the kernel of the condensed operator
    EXPECT_LT((c.schur * Vector::Ones(12)).norm(), 1e-10);
}

TEST(System, GeometriesAreCondensedOnce)
{
    const auto layout = mixed_layout();
    const auto sys = experiments::random_chain_system(layout, laplace_operator(), 1, 0, 1.0);
    ASSERT_EQ(sys.parts.size(), 3u);
    EXPECT_EQ(sys.parts[0].get(), sys.parts[2].get());
    EXPECT_NE(sys.parts[0].get(), sys.parts[1].get());
    EXPECT_EQ(sys.num_ports(), 2);
    EXPECT_EQ(sys.total_port_dofs(), 12);
}

TEST(System, FullSpacesReproduceTheMonolithicSolve)
{
    for (const auto& op : {laplace_operator(), elasticity_operator()}) {
        const auto sys = experiments::random_chain_system(mixed_layout(), op, 5, 1, 5.0);
        const auto full = solve_chain_full(sys);
        EXPECT_LT(rel_diff(full.full, solve_chain_monolithic(sys)), 1e-10);
        std::vector<Matrix> identities;
        for (int p = 0; p < sys.num_ports(); ++p) identities.push_back(Matrix::Identity(sys.port_size(p), sys.port_size(p)));
        EXPECT_LT(rel_diff(solve_chain(sys, identities).full, full.full), 1e-10);
    }
}

TEST(System, BodyLoadIsCarriedThrough)
{
    const auto layout = experiments::uniform_chain(unit, 3);
    const Point load{0.0, -1.0};
    const auto sys = build_chain_system(layout, elasticity_operator(), Vector::Zero(12), Vector::Zero(12), load);
    const auto full = solve_chain_full(sys);
    EXPECT_GT(full.full.norm(), 0.0);
    EXPECT_LT(rel_diff(full.full, solve_chain_monolithic(sys, load)), 1e-10);
}

TEST(System, ReducedErrorDecreasesWithTheBasis)
{
    const auto op = laplace_operator();
    const auto sys = experiments::random_chain_system(experiments::uniform_chain(unit, 4), op, 3, 0, 5.0);
    ComponentSpec right = unit;
    right.origin[0] = 1.0;
    const auto pair = join_pair(build_component_mesh(unit), build_component_mesh(right));
    const auto ctx = make_transfer_context(pair, op, PortMetricKind::lifting);
    const auto space = optimal_space(ctx, transfer_eigs(ctx), std::nullopt, 4);
    const auto full = solve_chain_full(sys);
    const SparseMatrix k = assemble_stiffness(sys.chain.mesh, op);
    double prev = std::numeric_limits<double>::infinity();
    for (int m = 1; m <= space.dim(); ++m) {
        const auto red = solve_chain(sys, std::vector<Matrix>(3, space.leading(m).basis));
        const double e = energy_error(full.full, red.full, k);
        EXPECT_LE(e, prev * (1.0 + 1e-10));
        prev = e;
    }
}

TEST(System, GlobalEstimatorBoundsTheError)
{
    const auto op = laplace_operator();
    const auto sys = experiments::random_chain_system(experiments::uniform_chain(unit, 4), op, 3, 2, 5.0);
    const auto consts = compute_chain_constants(sys);
    const auto full = solve_chain_full(sys);
    const SparseMatrix grad = assemble_gradient_gram(sys.chain.mesh, 1);
    Matrix basis = Matrix::Zero(6, 1);
    basis(0, 0) = 1.0;
    for (int m = 1; m <= 6; ++m) {
        const Matrix b = Matrix::Identity(6, 6).leftCols(m);
        const auto red = solve_chain(sys, std::vector<Matrix>(3, b));
        const auto est = estimate_global(port_jump_norms(sys, red.ports), consts);
        EXPECT_EQ(est.indicators.size(), 3u);
        const double err = gradient_error(full.full, red.full, grad);
        EXPECT_GE(est.delta, err * (1.0 - 1e-10)) << "m=" << m;
    }
}

TEST(System, InvalidInputsAreRejected)
{
    const auto op = laplace_operator();
    auto layout = experiments::uniform_chain(unit, 1);
    EXPECT_THROW(build_chain_system(layout, op, Vector::Zero(6), Vector::Zero(6)), Error);
    layout = experiments::uniform_chain(unit, 3);
    EXPECT_THROW(build_chain_system(layout, op, Vector::Zero(5), Vector::Zero(6)), Error);
    const auto sys = build_chain_system(layout, op, Vector::Zero(6), Vector::Zero(6));
    EXPECT_THROW(solve_chain(sys, {Matrix::Identity(6, 6)}), Error);
    EXPECT_THROW(solve_chain(sys, {Matrix::Identity(6, 6), Matrix::Identity(5, 5)}), Error);
    layout.components[1].geometry_id = "missing";
    EXPECT_THROW(build_chain_system(layout, op, Vector::Zero(6), Vector::Zero(6)), Error);
}

TEST(System, IndicatorRankingFollowsTheLocalError)
{
    // local contribution of port p: gradient error when only port p is reduced
    const auto op = laplace_operator();
    ComponentSpec right = unit;
    right.origin[0] = 1.0;
    const auto pair = join_pair(build_component_mesh(unit), build_component_mesh(right));
    const auto ctx = make_transfer_context(pair, op, PortMetricKind::lifting);
    const auto space = optimal_space(ctx, transfer_eigs(ctx), std::nullopt, 3);
    const std::vector<Matrix> bases = {space.leading(3).basis, space.leading(1).basis, space.leading(2).basis};
    const auto layout = experiments::uniform_chain(unit, 4);
    int compared = 0;
    for (int r = 0; r < 12; ++r) {
        const auto sys = experiments::random_chain_system(layout, op, 3, r, 5.0);
        const auto consts = compute_chain_constants(sys);
        const auto full = solve_chain_full(sys);
        const SparseMatrix grad = assemble_gradient_gram(sys.chain.mesh, 1);
        const auto est = estimate_global(port_jump_norms(sys, solve_chain(sys, bases).ports), consts);
        std::vector<double> contribution;
        for (int p = 0; p < 3; ++p) {
            std::vector<Matrix> only(3, Matrix::Identity(6, 6));
            only[static_cast<std::size_t>(p)] = bases[static_cast<std::size_t>(p)];
            contribution.push_back(gradient_error(full.full, solve_chain(sys, only).full, grad));
        }
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t b = a + 1; b < 3; ++b) {
                const double ratio = contribution[a] / contribution[b];
                if (ratio < 1.5 && ratio > 1.0 / 1.5) continue;
                ++compared;
                EXPECT_EQ(contribution[a] < contribution[b], est.indicators[a] < est.indicators[b]) << "realization " << r;
            }
    }
    EXPECT_GT(compared, 20);
}
