#include "pelletmpc/ocp.hpp"
#include "pelletmpc/operating_point.hpp"
#include "pelletmpc/qp_solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace pelletmpc;

namespace {

struct PlantOcp {
    PlasmaModel model;
    OperatingPoint op;
    ExtendedLtiModel ext;
    Weights w;
    PathConstraint pc;

    explicit PlantOcp(TransportCoefficients c = {}) : model(PlasmaModel::standard(std::move(c)))
    {
        op = fueled_equilibrium(model, PelletSpec{}, 0.1, 0.005, 1e20, parabolic_profile(model.grid, 1e20, 15.0));
        ext = build_extended_model(jacobian(model, PelletSpec{}, op.x), 0.1, 0.005);
        w = Weights::width_scaled(model.grid);
        pc = PathConstraint::edge_density_limit(model.grid, greenwald_limit(15.0, 2.0));
    }
};

const PlantOcp& plant_ocp()
{
    static const PlantOcp p;
    return p;
}

// Perturbed equilibrium: densities scaled by a random factor per node, temperatures jittered.
Vector random_nearby_state(std::mt19937_64& rng, const Vector& x_eq, double spread)
{
    std::uniform_real_distribution<double> uni(1.0 - spread, 1.0 + spread);
    Vector x = x_eq;
    for (Index i = 0; i < x.size(); ++i) x(i) *= uni(rng);
    return x;
}

Vector random_inputs(std::mt19937_64& rng, Index N)
{
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Vector U(N);
    for (Index i = 0; i < N; ++i) U(i) = uni(rng);
    return U;
}

}  // namespace

TEST(GreenwaldLimit, ClosedForms)
{
    EXPECT_NEAR(greenwald_limit(std::numbers::pi, 1.0), 1e20, 1e6);
    EXPECT_NEAR(greenwald_limit(15.0, 2.0) / 1e20, 15.0 / (4.0 * std::numbers::pi), 1e-15);
    EXPECT_NEAR(greenwald_limit(15.0, 2.0), 1.19366e20, 0.00001e20);
    EXPECT_NEAR(greenwald_limit(15.0, 4.0), 0.25 * greenwald_limit(15.0, 2.0), 1e5);
}

TEST(LineAverage, TrapezoidRule)
{
    const RadialGrid g = RadialGrid::standard(DeviceParams{});
    EXPECT_NEAR(line_avg_density(Vector::Constant(13, 0.7e20), g), 0.7e20, 1e5);
    EXPECT_NEAR(line_avg_density(g.nodes(), g), 1.0, 1e-15);
    EXPECT_EQ(line_avg_density(Vector::Zero(13), g), 0.0);
    // Stacked states are accepted; only the density block is read.
    Vector x = Vector::Zero(26);
    x.head(13) = g.nodes();
    x.tail(13).setConstant(99.0);
    EXPECT_NEAR(line_avg_density(x, g), 1.0, 1e-15);
    EXPECT_THROW(line_avg_density(Vector::Zero(7), g), DimensionError);
}

TEST(Reference, DefaultStepSchedule)
{
    const ReferenceSignal ref;
    EXPECT_EQ(ref.at(0.0), 1e20);
    EXPECT_EQ(ref.at(1.999), 1e20);
    EXPECT_EQ(ref.at(2.0), 2e20);
    EXPECT_EQ(ref.at(5.95), 2e20);
    EXPECT_EQ(ref.at(6.0), 1e20);
    EXPECT_EQ(ref.at(10.0), 1e20);
    ReferenceSignal bad;
    bad.breakpoints = {0.0, 3.0, 2.0};
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Reference, StateBlocks)
{
    const RadialGrid g = RadialGrid::standard(DeviceParams{});
    EXPECT_EQ(build_reference_state(0.0, 26).norm(), 0.0);
    const Vector x = build_reference_state(1e20, 26);
    EXPECT_EQ(x.head(13), Vector::Constant(13, 1e20));
    EXPECT_EQ(x.tail(13).norm(), 0.0);
    EXPECT_NEAR(line_avg_density(x, g), 1e20, 1e5);
    EXPECT_THROW(build_reference_state(1e20, 7), DimensionError);
}

TEST(Weights, WidthScaledDensityOnly)
{
    const RadialGrid g = RadialGrid::standard(DeviceParams{});
    const Weights w = Weights::width_scaled(g, 3.0);
    for (Index i = 0; i < 13; ++i) {
        EXPECT_NEAR(w.Q(i, i), 3.0 * g.widths()(i) / 2.0 / 1e40, 1e-55);
        EXPECT_EQ(w.Q(13 + i, 13 + i), 0.0);
    }
    EXPECT_EQ(w.P, w.Q);
    EXPECT_EQ(w.R(0, 0), 0.0);
    EXPECT_EQ((w.Q - Matrix(w.Q.diagonal().asDiagonal())).norm(), 0.0);
    // A 1% uniform density error costs about 1e-4 per unit scale.
    const Vector e = build_reference_state(0.01e20, 26);
    EXPECT_NEAR(e.dot(Weights::width_scaled(g).Q * e), 1e-4 * g.widths().sum() / 2.0, 1e-18);
}

TEST(PathConstraint, SelectsEdgeNode)
{
    const RadialGrid g = RadialGrid::standard(DeviceParams{});
    const PathConstraint pc = PathConstraint::edge_density_limit(g, 1.2e20);
    ASSERT_EQ(pc.rows(), 1);
    EXPECT_EQ(pc.G(0, 10), 1.0);
    EXPECT_EQ(pc.G.sum(), 1.0);
    EXPECT_EQ(pc.h(0), 1.2e20);
}

TEST(CondenseOcp, ScalarToyWantsOnePellet)
{
    ExtendedLtiModel m = extend(Matrix::Ones(1, 1), Matrix::Ones(1, 1), 1);
    Weights w;
    w.Q = Matrix::Ones(1, 1);
    w.P = Matrix::Ones(1, 1);
    w.R = Matrix::Zero(1, 1);
    PathConstraint pc{Matrix::Ones(1, 1), Vector::Constant(1, 10.0)};
    const CondensedOcp ocp =
        condense_ocp(condense(m, 1), Vector::Zero(1), w, pc, Vector::Zero(1), Vector::Ones(1));
    // J(u) = (0 - 1)^2 + (u - 1)^2.
    EXPECT_NEAR(ocp.H(0, 0), 2.0, 1e-15);
    EXPECT_NEAR(ocp.g(0), -2.0, 1e-15);
    EXPECT_NEAR(ocp.constant, 2.0, 1e-15);
    const QpSolution s = solve_qp(QpProblem{ocp.H, ocp.g, ocp.A_ineq, ocp.b_ineq, ocp.lb, ocp.ub});
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.u_star(0), 1.0, 1e-9);
}

TEST(CondenseOcp, SingleStepWithoutTerminalWeightIgnoresInput)
{
    ExtendedLtiModel m = extend(Matrix::Ones(1, 1), Matrix::Ones(1, 1), 1);
    Weights w;
    w.Q = Matrix::Ones(1, 1);
    w.P = Matrix::Zero(1, 1);
    w.R = Matrix::Zero(1, 1);
    PathConstraint pc{Matrix::Ones(1, 1), Vector::Constant(1, 10.0)};
    const CondensedOcp ocp =
        condense_ocp(condense(m, 1), Vector::Zero(1), w, pc, Vector::Zero(1), Vector::Ones(1));
    EXPECT_EQ(ocp.H(0, 0), 0.0);
    EXPECT_EQ(ocp.g(0), 0.0);
    EXPECT_EQ(ocp.constant, 1.0);
}

TEST(CondenseOcp, AtReferenceWithoutDriftZeroInputIsOptimal)
{
    std::mt19937_64 rng(21);
    Matrix A = Matrix::Identity(3, 3) * 0.8;
    A(0, 1) = 0.1;
    Matrix B(3, 1);
    B << 0.5, 0.2, 0.0;
    ExtendedLtiModel m = extend(A, B, 1);
    m.x_eq = Vector::Constant(3, 2.0);
    Weights w;
    w.Q = Matrix::Identity(3, 3);
    w.P = w.Q;
    w.R = Matrix::Zero(1, 1);
    PathConstraint pc{Matrix::Ones(1, 3), Vector::Constant(1, 100.0)};
    const CondensedOcp ocp = condense_ocp(condense(m, 4), m.x_eq, w, pc, m.x_eq, m.x_eq);
    EXPECT_LE(ocp.g.norm(), 1e-14);
    const QpSolution s = solve_qp(QpProblem{ocp.H, ocp.g, ocp.A_ineq, ocp.b_ineq, ocp.lb, ocp.ub});
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_LE(s.u_star.norm(), 1e-12);
}

TEST(CondenseOcp, QuadraticMatchesExplicitRecursion)
{
    const PlantOcp& p = plant_ocp();
    std::mt19937_64 rng(22);
    const int N = 5;
    const CondensedPrediction pred = condense(p.ext, N);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x0 = random_nearby_state(rng, p.op.x, 0.2);
        const Vector x_ref = build_reference_state(trial % 2 ? 2e20 : 1e20, 26);
        const Vector U = random_inputs(rng, N);
        const CondensedOcp ocp = condense_ocp(pred, p.op.x, p.w, p.pc, x0, x_ref);

        // Literal sum: x_0 .. x_{N-1} weighted by Q, x_N by P, inputs by R.
        double J = 0.0;
        Vector x = x0;
        for (int k = 0; k < N; ++k) {
            const Vector e = x - x_ref;
            J += e.dot(p.w.Q * e) + U(k) * p.w.R(0, 0) * U(k);
            x = p.op.x + p.ext.A_bar * (x - p.op.x) + p.ext.B_bar * U(k) + p.ext.d_bar;
        }
        J += (x - x_ref).dot(p.w.P * (x - x_ref));
        EXPECT_NEAR(ocp.objective(U) / J, 1.0, 1e-9) << "trial " << trial;
        EXPECT_NEAR(rollout_objective(p.ext, p.w, x0, x_ref, U) / J, 1.0, 1e-12);
    }
}

TEST(CondenseOcp, HessianSymmetricPositiveSemidefinite)
{
    const PlantOcp& p = plant_ocp();
    for (int N : {2, 5, 10, 20}) {
        const CondensedOcp ocp =
            condense_ocp(condense(p.ext, N), p.op.x, p.w, p.pc, p.op.x, build_reference_state(1e20, 26));
        EXPECT_EQ((ocp.H - ocp.H.transpose()).norm(), 0.0);
        const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(ocp.H).eigenvalues().minCoeff();
        EXPECT_GE(min_eig, -1e-9 * ocp.H.norm()) << "N = " << N;
    }
}

TEST(CondenseOcp, ConstraintRowsMatchPredictedEdgeDensity)
{
    const PlantOcp& p = plant_ocp();
    std::mt19937_64 rng(23);
    const int N = 5;
    const CondensedPrediction pred = condense(p.ext, N);
    const double h = p.pc.h(0);
    int satisfied = 0, violated = 0;
    for (int trial = 0; trial < 200; ++trial) {
        // Edge densities between roughly 0.6 and 1.2 of the limit so both outcomes occur.
        Vector x0 = random_nearby_state(rng, p.op.x, 0.1);
        x0.head(13) *= 1.0 + 0.5 * random_inputs(rng, 1)(0);
        const Vector U = random_inputs(rng, N).array().round().matrix();
        const CondensedOcp ocp = condense_ocp(pred, p.op.x, p.w, p.pc, x0, build_reference_state(1e20, 26));
        Vector x = x0;
        bool recursion_ok = true;
        bool condensed_ok = true;
        for (int k = 0; k < N; ++k) {
            x = p.ext.step(x, U.segment(k, 1));
            const double margin = (x(10) - h) / h;
            const double row = ocp.A_ineq.row(k).dot(U) - ocp.b_ineq(k);
            EXPECT_NEAR(row, margin, 1e-9);
            if (margin > 1e-9) recursion_ok = false;
            if (row > 1e-9) condensed_ok = false;
        }
        EXPECT_EQ(recursion_ok, condensed_ok);
        (recursion_ok ? satisfied : violated) += 1;
        EXPECT_EQ(ocp.feasible(U, 1e-9), condensed_ok);
    }
    EXPECT_GT(satisfied, 10);
    EXPECT_GT(violated, 10);
}

TEST(CondenseOcp, ViolationReportedInOriginalUnits)
{
    const PlantOcp& p = plant_ocp();
    Vector x0 = p.op.x;
    x0.head(13) *= 2.0;
    const CondensedOcp ocp =
        condense_ocp(condense(p.ext, 3), p.op.x, p.w, p.pc, x0, build_reference_state(1e20, 26));
    const Vector U = Vector::Zero(3);
    Vector x = x0;
    double worst = -1e300;
    for (int k = 0; k < 3; ++k) {
        x = p.ext.step(x, U.segment(k, 1));
        worst = std::max(worst, x(10) - p.pc.h(0));
    }
    EXPECT_NEAR(ocp.max_violation(U) / worst, 1.0, 1e-9);
}

TEST(CondenseOcp, TemperatureShiftLeavesHessianUnchanged)
{
    const PlantOcp& p = plant_ocp();
    const CondensedPrediction pred = condense(p.ext, 5);
    const Vector x_ref = build_reference_state(1e20, 26);
    const CondensedOcp base = condense_ocp(pred, p.op.x, p.w, p.pc, p.op.x, x_ref);
    Vector hot = p.op.x;
    hot(13 + 4) += 3.0;
    const CondensedOcp shifted = condense_ocp(pred, p.op.x, p.w, p.pc, hot, x_ref);
    EXPECT_EQ(base.H, shifted.H);
}

TEST(CondenseOcp, TemperatureShiftLeavesGradientUnchangedWithoutCoupling)
{
    TransportCoefficients c;
    c.poloidal_drift = false;
    c.thermodiffusion = false;
    const PlantOcp p(c);
    const CondensedPrediction pred = condense(p.ext, 5);
    const Vector x_ref = build_reference_state(1e20, 26);
    const CondensedOcp base = condense_ocp(pred, p.op.x, p.w, p.pc, p.op.x, x_ref);
    for (Index j = 13; j < 26; ++j) {
        Vector hot = p.op.x;
        hot(j) += 2.5;
        const CondensedOcp shifted = condense_ocp(pred, p.op.x, p.w, p.pc, hot, x_ref);
        EXPECT_EQ(base.H, shifted.H);
        EXPECT_LE((base.g - shifted.g).norm(), 1e-10 * base.g.norm()) << "temperature node " << j - 13;
    }
}
