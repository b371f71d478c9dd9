#include "pelletmpc/qp_solver.hpp"
#include "pelletmpc/verify.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <random>

using namespace pelletmpc;

namespace {

QpProblem box_problem(Matrix H, Vector g, double lo, double hi)
{
    const Index d = g.size();
    return QpProblem{std::move(H), std::move(g), Matrix(0, d), Vector(0), Vector::Constant(d, lo),
                     Vector::Constant(d, hi)};
}

// Brute force over faces: every variable is free, at its lower bound or at its upper bound, and
// every general row is either active or ignored. The minimiser restricted to each face is found
// from its KKT system; the optimum is the best feasible face minimiser.
double face_enumeration_optimum(const QpProblem& p)
{
    const Index d = p.dim();
    const Index q = p.num_ineq();
    long faces = 1;
    for (Index j = 0; j < d; ++j) faces *= 3;
    double best = std::numeric_limits<double>::infinity();
    for (long code = 0; code < faces; ++code) {
        for (long rows = 0; rows < (1L << q); ++rows) {
            std::vector<Vector> a;
            std::vector<double> b;
            long c = code;
            for (Index j = 0; j < d; ++j, c /= 3) {
                if (c % 3 == 1) {
                    a.push_back(Vector::Unit(d, j));
                    b.push_back(p.lb(j));
                } else if (c % 3 == 2) {
                    a.push_back(Vector::Unit(d, j));
                    b.push_back(p.ub(j));
                }
            }
            for (Index i = 0; i < q; ++i)
                if ((rows >> i) & 1L) {
                    a.push_back(p.A_ineq.row(i).transpose());
                    b.push_back(p.b_ineq(i));
                }
            const Index m = static_cast<Index>(a.size());
            if (m > d) continue;
            Matrix K = Matrix::Zero(d + m, d + m);
            Vector r(d + m);
            K.topLeftCorner(d, d) = p.H;
            r.head(d) = -p.g;
            for (Index k = 0; k < m; ++k) {
                K.block(0, d + k, d, 1) = a[k];
                K.block(d + k, 0, 1, d) = a[k].transpose();
                r(d + k) = b[k];
            }
            Eigen::FullPivLU<Matrix> lu(K);
            if (!lu.isInvertible()) continue;
            const Vector x = lu.solve(r).head(d);
            bool ok = true;
            for (Index j = 0; j < d && ok; ++j) ok = x(j) >= p.lb(j) - 1e-9 && x(j) <= p.ub(j) + 1e-9;
            for (Index i = 0; i < q && ok; ++i) ok = p.A_ineq.row(i).dot(x) <= p.b_ineq(i) + 1e-9;
            if (ok) best = std::min(best, detail::objective(p, x));
        }
    }
    return best;
}

}  // namespace

TEST(QpSolver, UnconstrainedMinimumInsideBox)
{
    const QpSolution s = solve_qp(box_problem(Matrix::Identity(3, 3), Vector::Zero(3), -1.0, 1.0));
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_LT(s.u_star.norm(), 1e-12);
    EXPECT_NEAR(s.objective, 0.0, 1e-12);
}

TEST(QpSolver, UpperBoundBecomesActive)
{
    Vector g = Vector::Zero(3);
    g(0) = -3.0;
    const QpSolution s = solve_qp(box_problem(Matrix::Identity(3, 3), g, -1.0, 1.0));
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.u_star(0), 1.0, 1e-12);
    EXPECT_NEAR(s.u_star(1), 0.0, 1e-12);
    EXPECT_NEAR(s.objective, -2.5, 1e-9);
    // Multiplier of the active upper bound: 3 - 1 = 2.
    EXPECT_NEAR(s.multipliers(3 + 0), 2.0, 1e-8);
}

TEST(QpSolver, InfiniteBoundsGiveNewtonPoint)
{
    Matrix H(2, 2);
    H << 4.0, 1.0, 1.0, 3.0;
    const Vector g = Vector::Constant(2, -1.0);
    const double inf = std::numeric_limits<double>::infinity();
    const QpSolution s = solve_qp(box_problem(H, g, -inf, inf));
    ASSERT_EQ(s.status, QpStatus::optimal);
    const Vector expected = H.ldlt().solve(-g);
    EXPECT_LT((s.u_star - expected).norm(), 1e-9);
}

TEST(QpSolver, LinearObjectiveGoesToVertex)
{
    Vector g(2);
    g << 1.0, -1.0;
    const QpSolution s = solve_qp(box_problem(Matrix::Zero(2, 2), g, 0.0, 1.0));
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.u_star(0), 0.0, 1e-12);
    EXPECT_NEAR(s.u_star(1), 1.0, 1e-12);
}

TEST(QpSolver, GeneralRowCutsOffUnconstrainedMinimum)
{
    // min (u0-1)^2 + (u1-1)^2 s.t. u0 + u1 <= 1: optimum (0.5, 0.5).
    QpProblem p = box_problem(2.0 * Matrix::Identity(2, 2), Vector::Constant(2, -2.0), -5.0, 5.0);
    p.A_ineq = Matrix::Ones(1, 2);
    p.b_ineq = Vector::Ones(1);
    const QpSolution s = solve_qp(p);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.u_star(0), 0.5, 1e-9);
    EXPECT_NEAR(s.u_star(1), 0.5, 1e-9);
    EXPECT_NEAR(s.multipliers(4), 1.0, 1e-8);
}

TEST(QpSolver, MatchesFaceEnumerationOnRandomInstances)
{
    std::mt19937_64 rng(7);
    for (int k = 0; k < 60; ++k) {
        const Index d = 1 + static_cast<Index>(rng() % 7);
        const Index q = static_cast<Index>(rng() % 5);
        const QpProblem p = random_qp(rng, d, q);
        const QpSolution s = solve_qp(p);
        ASSERT_EQ(s.status, QpStatus::optimal) << "instance " << k;
        const double oracle = face_enumeration_optimum(p);
        EXPECT_NEAR(s.objective, oracle, 1e-6 * std::max(1.0, std::abs(oracle))) << "instance " << k;
    }
}

TEST(QpSolver, KktConditionsHoldOnRandomSuite)
{
    const KktSuiteReport r = qp_kkt_suite(200, 11);
    EXPECT_EQ(r.optimal, r.instances);
    EXPECT_LE(r.worst_primal, 1e-8);
    EXPECT_LE(r.worst_stationarity, 1e-7);
    EXPECT_LE(r.worst_complementarity, 1e-7);
    EXPECT_LE(r.worst_dual, 1e-9);
}

TEST(QpSolver, ConvexButSingularHessian)
{
    std::mt19937_64 rng(3);
    for (int k = 0; k < 30; ++k) {
        const QpProblem p = random_qp(rng, 6, 3, false);
        const QpSolution s = solve_qp(p);
        ASSERT_EQ(s.status, QpStatus::optimal);
        EXPECT_NEAR(s.objective, face_enumeration_optimum(p), 1e-6);
    }
}

TEST(QpSolver, WarmStartReachesSameOptimumNoSlower)
{
    std::mt19937_64 rng(21);
    for (int k = 0; k < 40; ++k) {
        const QpProblem p = random_qp(rng, 8, 4);
        const QpSolution cold = solve_qp(p);
        ASSERT_EQ(cold.status, QpStatus::optimal);
        const QpSolution warm = solve_qp(p, &cold);
        ASSERT_EQ(warm.status, QpStatus::optimal);
        EXPECT_LT((warm.u_star - cold.u_star).lpNorm<Eigen::Infinity>(), 1e-9);
        EXPECT_LE(warm.iterations, cold.iterations);
    }
}

TEST(QpSolver, WarmStartFromPerturbedProblemStillOptimal)
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.2);
    for (int k = 0; k < 40; ++k) {
        QpProblem p = random_qp(rng, 6, 3);
        const QpSolution first = solve_qp(p);
        for (Index j = 0; j < p.dim(); ++j) p.g(j) += noise(rng);
        const QpSolution warm = solve_qp(p, &first);
        const QpSolution cold = solve_qp(p);
        ASSERT_EQ(warm.status, QpStatus::optimal);
        EXPECT_NEAR(warm.objective, cold.objective, 1e-8 * std::max(1.0, std::abs(cold.objective)));
    }
}

TEST(QpSolver, FixedVariablesMatchReducedProblem)
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int k = 0; k < 30; ++k) {
        const Index d = 6;
        QpProblem p = random_qp(rng, d, 2);
        // Fix u_0 and u_3.
        const std::vector<Index> fixed{0, 3};
        const std::vector<Index> free{1, 2, 4, 5};
        Vector value = Vector::Zero(d);
        for (Index j : fixed) {
            value(j) = 0.5 * uni(rng);
            p.lb(j) = p.ub(j) = value(j);
        }
        // Keep the general rows satisfiable at the fixed values.
        for (Index i = 0; i < p.num_ineq(); ++i) p.b_ineq(i) += p.A_ineq.row(i).cwiseAbs().sum();
        const QpSolution full = solve_qp(p);
        ASSERT_EQ(full.status, QpStatus::optimal);

        const Index r = static_cast<Index>(free.size());
        QpProblem red;
        red.H.resize(r, r);
        red.g.resize(r);
        red.A_ineq.resize(p.num_ineq(), r);
        red.b_ineq = p.b_ineq - p.A_ineq * value;
        red.lb.resize(r);
        red.ub.resize(r);
        const Vector shift = p.H * value;
        for (Index a = 0; a < r; ++a) {
            for (Index b = 0; b < r; ++b) red.H(a, b) = p.H(free[a], free[b]);
            red.g(a) = p.g(free[a]) + shift(free[a]);
            red.A_ineq.col(a) = p.A_ineq.col(free[a]);
            red.lb(a) = p.lb(free[a]);
            red.ub(a) = p.ub(free[a]);
        }
        const QpSolution reduced = solve_qp(red);
        ASSERT_EQ(reduced.status, QpStatus::optimal);
        for (Index j : fixed) EXPECT_EQ(full.u_star(j), value(j));
        for (Index a = 0; a < r; ++a) EXPECT_NEAR(full.u_star(free[a]), reduced.u_star(a), 1e-8);
    }
}

TEST(QpSolver, AddingAConstraintNeverLowersObjective)
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        QpProblem p = random_qp(rng, 5, 2);
        const QpSolution before = solve_qp(p);
        ASSERT_EQ(before.status, QpStatus::optimal);
        p.A_ineq.conservativeResize(3, Eigen::NoChange);
        p.b_ineq.conservativeResize(3);
        for (Index j = 0; j < 5; ++j) p.A_ineq(2, j) = uni(rng);
        p.b_ineq(2) = 0.05;
        const QpSolution after = solve_qp(p);
        ASSERT_EQ(after.status, QpStatus::optimal);
        EXPECT_GE(after.objective, before.objective - 1e-9);
    }
}

TEST(QpSolver, ReportsInfeasibility)
{
    // u0 >= 2 with u0 <= 1.
    QpProblem p = box_problem(Matrix::Identity(2, 2), Vector::Zero(2), 0.0, 1.0);
    p.A_ineq = Matrix::Zero(1, 2);
    p.A_ineq(0, 0) = -1.0;
    p.b_ineq = Vector::Constant(1, -2.0);
    EXPECT_EQ(solve_qp(p).status, QpStatus::infeasible);
}

TEST(QpSolver, ReportsIterationLimit)
{
    std::mt19937_64 rng(1);
    QpProblem p = random_qp(rng, 8, 0);
    p.g = Vector::Constant(8, -50.0);  // every upper bound binds
    QpSettings settings;
    settings.max_iterations = 2;
    EXPECT_EQ(solve_qp(p, nullptr, settings).status, QpStatus::iteration_limit);
}

TEST(QpSolver, IsDeterministic)
{
    std::mt19937_64 rng(9);
    const QpProblem p = random_qp(rng, 9, 5);
    const QpSolution a = solve_qp(p);
    const QpSolution b = solve_qp(p);
    EXPECT_EQ(a.u_star, b.u_star);
    EXPECT_EQ(a.active_set, b.active_set);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(QpSolver, RejectsMalformedProblems)
{
    QpProblem p = box_problem(Matrix::Identity(2, 2), Vector::Zero(2), 0.0, 1.0);
    p.lb(1) = 2.0;
    EXPECT_THROW(solve_qp(p), InvalidArgument);

    QpProblem q = box_problem(Matrix::Identity(3, 3), Vector::Zero(2), 0.0, 1.0);
    EXPECT_THROW(solve_qp(q), DimensionError);

    QpProblem r = box_problem(Matrix::Identity(2, 2), Vector::Zero(2), 0.0, 1.0);
    r.g(0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(solve_qp(r), NumericalError);
}
