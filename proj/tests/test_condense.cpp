#include "support.hpp"

#include <gtest/gtest.h>

using namespace portred;
using namespace portred::testing;

namespace {

Matrix identity(int n) { return Matrix::Identity(n, n); }

}  // namespace

TEST(Condense, SchurMatchesDenseOracle)
{
    const auto pair = rect_pair(4, 4, 1.0, 1.0, center_crack());
    const auto op = laplace_operator();
    const auto sys = random_system(pair, op, 3);
    const auto part = pair.partition(1);
    const auto s = condense(sys, part);

    // independent dense Schur complement over the free DOFs
    const Matrix a = Matrix(sys.stiffness);
    IndexList interior = part.omega1;
    interior.insert(interior.end(), part.omega2.begin(), part.omega2.end());
    const Matrix aii = a(interior, interior);
    const Matrix aig = a(interior, part.gamma_in);
    const Matrix agg = a(part.gamma_in, part.gamma_in);
    const Matrix schur = agg - aig.transpose() * aii.ldlt().solve(aig);
    EXPECT_LT((s.schur_matrix - schur).norm() / schur.norm(), 1e-12);
    EXPECT_LT((s.schur_matrix - s.schur_matrix.transpose()).norm(), 1e-12 * schur.norm());
}

TEST(Condense, FullPortSolveEqualsMonolithic)
{
    for (const auto& op : {laplace_operator(), elasticity_operator()}) {
        const auto pair = rect_pair(5, 4, 1.0, 1.0, Hole{{0.4, 0.5}, {0.2, 0.25}});
        const auto sys = random_system(pair, op, 5);
        const auto s = condense(sys, pair.partition(op.dofs_per_node()));
        EXPECT_LT(rel_diff(solve_full_port(s).full, dense_solve(sys)), 1e-10);
    }
}

TEST(Condense, ReducedWithIdentityIsExact)
{
    const auto pair = beam_pair(shifted_crack(), 10, 4);
    const auto op = elasticity_operator();
    const auto sys = random_system(pair, op, 9);
    const auto s = condense(sys, pair.partition(2));
    const auto full = solve_full_port(s);
    const auto red = solve_reduced(s, identity(s.port_dofs()));
    EXPECT_LT(rel_diff(red.full, full.full), 1e-10);
    EXPECT_LT(energy_error(full.full, red.full, sys), 1e-8);
}

TEST(Condense, ReducedIsGalerkinOptimalInEnergy)
{
    // the reduced port solution minimizes the energy error over its trial space
    const auto pair = rect_pair(6, 6);
    const auto op = laplace_operator();
    const auto sys = random_system(pair, op, 21);
    const auto s = condense(sys, pair.partition(1));
    const auto full = solve_full_port(s);
    Matrix basis = Matrix::Random(s.port_dofs(), 3);
    const auto red = solve_reduced(s, basis);
    const double best = (full.port - red.port).dot(s.schur_matrix * (full.port - red.port));
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    for (int t = 0; t < 20; ++t) {
        Vector c(3);
        for (int i = 0; i < 3; ++i) c(i) = n(rng);
        const Vector other = red.coefficients + 0.1 * c;
        const Vector diff = full.port - basis * other;
        EXPECT_GE(diff.dot(s.schur_matrix * diff), best - 1e-12 * std::abs(best));
    }
}

TEST(Condense, NestedSpacesDecreaseTheError)
{
    const auto pair = rect_pair(6, 6);
    const auto op = laplace_operator();
    const auto sys = random_system(pair, op, 2);
    const auto s = condense(sys, pair.partition(1));
    const auto full = solve_full_port(s);
    const Matrix basis = Matrix::Random(s.port_dofs(), s.port_dofs());
    double prev = std::numeric_limits<double>::infinity();
    for (int m = 0; m <= s.port_dofs(); ++m) {
        const double e = energy_error(full.full, solve_reduced(s, Matrix(basis.leftCols(m))).full, sys);
        EXPECT_LE(e, prev + 1e-12);
        prev = e;
    }
    EXPECT_LT(prev, 1e-9);
}

TEST(Condense, RecondenseRhsReusesTheFactorization)
{
    const auto pair = rect_pair(4, 4);
    const auto op = laplace_operator();
    const auto base = random_system(pair, op, 1, 0);
    const auto other = random_system(pair, op, 1, 1);
    const auto s0 = condense(base, pair.partition(1));
    const auto s1 = recondense_rhs(s0, other);
    const auto direct = condense(other, pair.partition(1));
    EXPECT_LT((s1.schur_rhs - direct.schur_rhs).norm(), 1e-10 * std::max(1.0, direct.schur_rhs.norm()));
    EXPECT_LT(rel_diff(solve_full_port(s1).full, dense_solve(other)), 1e-10);
}

TEST(Condense, RankDeficientBasisIsRejected)
{
    const auto pair = rect_pair(3, 3);
    const auto sys = random_system(pair, laplace_operator(), 1);
    const auto s = condense(sys, pair.partition(1));
    Matrix basis(s.port_dofs(), 2);
    basis.col(0) = Vector::Ones(s.port_dofs());
    basis.col(1) = 2.0 * basis.col(0);
    EXPECT_THROW(solve_reduced(s, basis), Error);
    EXPECT_THROW(solve_reduced(s, Matrix::Ones(s.port_dofs() + 1, 1)), Error);
}

TEST(Condense, EmptyBasisGivesZeroPortTrace)
{
    const auto pair = rect_pair(3, 3);
    const auto sys = random_system(pair, laplace_operator(), 1);
    const auto s = condense(sys, pair.partition(1));
    const auto red = solve_reduced(s, Matrix(s.port_dofs(), 0));
    EXPECT_EQ(red.port.norm(), 0.0);
    const Vector u = reconstruct(s, red.port);
    const auto part = pair.partition(1);
    for (int d : part.gamma_out) EXPECT_EQ(u(d), sys.dirichlet_values.at(d));
}

TEST(Condense, SmallestPairMatchesMonolithic)
{
    // one element per component
    const auto pair = rect_pair(1, 1);
    const auto sys = random_system(pair, laplace_operator(), 12);
    const auto part = pair.partition(1);
    const auto s = condense(sys, part);
    const Vector mono = dense_solve(sys);
    const auto full = solve_full_port(s);
    for (std::size_t i = 0; i < part.gamma_in.size(); ++i)
        EXPECT_NEAR(full.port(static_cast<Eigen::Index>(i)), mono(part.gamma_in[i]), 1e-12 * std::max(1.0, mono.norm()));
}

TEST(Condense, EnergyErrorIsTheRelativeQuadraticForm)
{
    const auto pair = rect_pair(4, 4);
    const auto sys = random_system(pair, laplace_operator(), 6);
    const auto s = condense(sys, pair.partition(1));
    const auto full = solve_full_port(s);
    const auto red = solve_reduced(s, Matrix(Matrix::Ones(s.port_dofs(), 1)));
    const Matrix k = Matrix(sys.raw_stiffness);
    const Vector e = full.full - red.full;
    EXPECT_NEAR(energy_error(full.full, red.full, sys), std::sqrt(e.dot(k * e) / full.full.dot(k * full.full)), 1e-12);
}
