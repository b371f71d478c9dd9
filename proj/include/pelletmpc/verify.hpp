#pragma once

// Oracles and consistency checks shared by the command-line verifier and the test suite.

#include "pelletmpc/harness.hpp"
#include "pelletmpc/mi_mpc.hpp"
#include "pelletmpc/ocp.hpp"
#include "pelletmpc/prediction_model.hpp"
#include "pelletmpc/pth_mpc.hpp"
#include "pelletmpc/qp_solver.hpp"

#include <algorithm>
#include <optional>
#include <random>
#include <vector>

namespace pelletmpc {

struct EnumerationResult {
    Vector U;
    double objective = 0.0;
};

/// Exhaustive search over {0,1}^d; empty when no binary point is feasible.
inline std::optional<EnumerationResult> enumerate_binary(const CondensedOcp& ocp, double tol = 1e-8)
{
    const Index d = ocp.dim();
    require(d <= 24, "enumerate_binary: dimension too large to enumerate");
    std::optional<EnumerationResult> best;
    Vector U(d);
    for (unsigned long mask = 0; mask < (1UL << d); ++mask) {
        for (Index i = 0; i < d; ++i) U(i) = (mask >> i) & 1UL ? 1.0 : 0.0;
        if (!ocp.feasible(U, tol)) continue;
        const double J = ocp.objective(U);
        if (!best || J < best->objective) best = EnumerationResult{U, J};
    }
    return best;
}

struct SampledState {
    Vector x;
    double t = 0.0;
};

/// Decision-instant states of a closed-loop run, subsampled without replacement.
inline std::vector<SampledState> sample_states(const ClosedLoopTrace& trace, std::size_t count, std::uint64_t seed)
{
    std::vector<SampledState> all;
    for (const StepRecord& s : trace.steps) all.push_back({s.x0, s.t});
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    if (all.size() > count) all.resize(count);
    std::sort(all.begin(), all.end(), [](const SampledState& a, const SampledState& b) { return a.t < b.t; });
    return all;
}

struct OracleReport {
    int instances = 0;
    int matched = 0;
    int infeasible_both = 0;
    double max_rel_diff = 0.0;
};

inline double relative_difference(double a, double b)
{
    return std::abs(a - b) / std::max({1.0e-300, std::abs(a), std::abs(b)});
}

inline OracleReport bnb_vs_enumeration(const PredictionSetup& setup, const std::vector<SampledState>& states,
                                       const BnbConfig& cfg = {}, double rel_tol = 1e-6)
{
    OracleReport r;
    for (const SampledState& s : states) {
        const CondensedOcp ocp = setup.assemble(s.x, s.t);
        const auto oracle = enumerate_binary(ocp);
        const MipSolution mip = solve_bnb(ocp, cfg);
        ++r.instances;
        if (!oracle) {
            if (mip.status == MipStatus::fallback) {
                ++r.matched;
                ++r.infeasible_both;
            }
            continue;
        }
        if (mip.status != MipStatus::optimal) continue;
        const double diff = relative_difference(mip.objective, oracle->objective);
        r.max_rel_diff = std::max(r.max_rel_diff, diff);
        if (diff <= rel_tol) ++r.matched;
    }
    return r;
}

struct PthQualityReport {
    int instances = 0;
    int binary_feasible = 0;
    int compared = 0;
    double median_gap = 0.0;
    double max_gap = 0.0;
};

/// Relative gap (J_pth - J_opt) / |J_opt| of PTH's rounded sequence against the enumeration optimum.
inline PthQualityReport pth_vs_enumeration(const PredictionSetup& setup, const std::vector<SampledState>& states,
                                           const PthSchedule& schedule)
{
    PthQualityReport r;
    std::vector<double> gaps;
    for (const SampledState& s : states) {
        const CondensedOcp ocp = setup.assemble(s.x, s.t);
        const auto oracle = enumerate_binary(ocp);
        const PthResult res = pth_homotopy(ocp, schedule, Vector::Zero(ocp.dim()));
        ++r.instances;
        const bool binary = within_epsilon_of_binary(res.u_rounded, 0.0);
        if (binary && ocp.feasible(res.u_rounded, 1e-8)) ++r.binary_feasible;
        if (!oracle) continue;
        const double gap = (res.objective_true - oracle->objective) / std::max(std::abs(oracle->objective), 1e-300);
        gaps.push_back(gap);
        r.max_gap = std::max(r.max_gap, gap);
    }
    r.compared = static_cast<int>(gaps.size());
    if (!gaps.empty()) {
        std::sort(gaps.begin(), gaps.end());
        const std::size_t m = gaps.size() / 2;
        r.median_gap = gaps.size() % 2 ? gaps[m] : 0.5 * (gaps[m - 1] + gaps[m]);
    }
    return r;
}

/// Relative error of the extended model against RK4 integration of the linear ODE with the same input
/// pattern (input held for T_s_zoh, then free evolution) at step `fine_dt`.
inline double zoh_consistency_error(const ContinuousLinearModel& lin, const ExtendedLtiModel& ext, const Vector& dx0,
                                    double u, double fine_dt = 1e-5)
{
    const Vector drift = lin.drift.size() == lin.n() ? lin.drift : Vector::Zero(lin.n());
    auto f = [&](const Vector& dx, double uu) -> Vector { return lin.A_c * dx + lin.B_c.col(0) * uu + drift; };
    const long hold = std::lround(ext.T_s_zoh / fine_dt);
    const long total = std::lround(ext.T_s / fine_dt);
    Vector dx = dx0;
    for (long k = 0; k < total; ++k) {
        const double uu = k < hold ? u : 0.0;
        const Vector k1 = f(dx, uu);
        const Vector k2 = f(dx + 0.5 * fine_dt * k1, uu);
        const Vector k3 = f(dx + 0.5 * fine_dt * k2, uu);
        const Vector k4 = f(dx + fine_dt * k3, uu);
        dx += fine_dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    const Vector x_fine = lin.x_eq + dx;
    const Vector x_model = ext.step(lin.x_eq + dx0, Vector::Constant(1, u));
    const Vector scale = lin.state_scale.size() == lin.n() ? lin.state_scale : Vector::Ones(lin.n());
    return (x_model - x_fine).cwiseQuotient(scale).norm() / x_fine.cwiseQuotient(scale).norm();
}

/// Largest relative mismatch between A_c d and a fresh central difference of the plant along d.
inline double jacobian_directional_error(const PlasmaModel& model, const ContinuousLinearModel& lin, int directions,
                                         std::uint64_t seed, double step = 1e-4)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vector source = Vector::Zero(model.nodes());
    double worst = 0.0;
    for (int k = 0; k < directions; ++k) {
        Vector d(lin.n());
        for (Index i = 0; i < d.size(); ++i) d(i) = normal(rng) * lin.state_scale(i);
        d *= 0.01;
        const Vector fd = (rhs(lin.x_eq + step * d, source, model) - rhs(lin.x_eq - step * d, source, model)) / (2.0 * step);
        const Vector Ad = lin.A_c * d;
        const Vector scale = lin.state_scale;
        worst = std::max(worst, (fd - Ad).cwiseQuotient(scale).norm() / Ad.cwiseQuotient(scale).norm());
    }
    return worst;
}

/// |sum V_i dn_i/dt - sum V_i S_i - edge flow| relative to the largest term of the balance.
inline double particle_balance_error(const PlasmaModel& model, const Vector& x, const Vector& source)
{
    const Vector dx = rhs(x, source, model);
    const Vector& V = model.grid.volumes();
    const Index m = model.nodes();
    const double lhs = V.dot(dx.head(m));
    const double src = V.dot(source);
    const double edge = edge_particle_flow(x, model);
    const double scale = std::max({std::abs(lhs), std::abs(src), std::abs(edge),
                                   V.cwiseProduct(dx.head(m)).cwiseAbs().sum(), 1e-300});
    return std::abs(lhs - src - edge) / scale;
}

/// Random convex QP with a guaranteed interior point, used by property tests and the verifier.
inline QpProblem random_qp(std::mt19937_64& rng, Index d, Index q, bool strictly_convex = true)
{
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Matrix M(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) M(i, j) = uni(rng);
    Matrix H = M.transpose() * M;
    if (strictly_convex) H.diagonal().array() += 0.1;
    Vector g(d);
    for (Index i = 0; i < d; ++i) g(i) = 3.0 * uni(rng);
    Vector lb = Vector::Constant(d, -1.0);
    Vector ub = Vector::Constant(d, 1.0);
    Matrix A(q, d);
    for (Index i = 0; i < q; ++i)
        for (Index j = 0; j < d; ++j) A(i, j) = uni(rng);
    Vector b(q);
    for (Index i = 0; i < q; ++i) b(i) = 0.1 + 0.5 * std::abs(uni(rng));
    return QpProblem{H, g, A, b, lb, ub};
}

struct KktSuiteReport {
    int instances = 0;
    int optimal = 0;
    double worst_primal = 0.0;
    double worst_stationarity = 0.0;  ///< divided by 1 + |g|
    double worst_complementarity = 0.0;
    double worst_dual = 0.0;
};

inline KktSuiteReport qp_kkt_suite(int count, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    KktSuiteReport r;
    for (int k = 0; k < count; ++k) {
        const Index d = 1 + static_cast<Index>(rng() % 10);
        const Index q = static_cast<Index>(rng() % 6);
        const QpProblem p = random_qp(rng, d, q);
        const QpSolution s = solve_qp(p);
        ++r.instances;
        if (s.status != QpStatus::optimal) continue;
        ++r.optimal;
        const KktResiduals res = kkt_residuals(p, s);
        r.worst_primal = std::max(r.worst_primal, res.primal);
        r.worst_stationarity = std::max(r.worst_stationarity, res.stationarity / (1.0 + p.g.norm()));
        r.worst_complementarity = std::max(r.worst_complementarity, res.complementarity);
        r.worst_dual = std::max(r.worst_dual, res.dual);
    }
    return r;
}

/// Five-input instance whose first entry wants 0.9 but is capped at 0.6 by a path row; the rest want 0.05.
inline CondensedOcp sticking_instance()
{
    const Index d = 5;
    CondensedOcp ocp;
    ocp.N = 5;
    ocp.H = 2.0 * Matrix::Identity(d, d);
    ocp.g = Vector::Constant(d, -0.1);
    ocp.g(0) = -1.8;
    ocp.constant = 0.81 + 4 * 0.0025;
    ocp.A_ineq = Matrix::Zero(1, d);
    ocp.A_ineq(0, 0) = 1.0 / 0.6;
    ocp.b_ineq = Vector::Ones(1);
    ocp.row_scale = Vector::Constant(1, 0.6);
    ocp.lb = Vector::Zero(d);
    ocp.ub = Vector::Ones(d);
    return ocp;
}

}  // namespace pelletmpc
