#pragma once

#include "pelletmpc/controller.hpp"
#include "pelletmpc/ocp.hpp"
#include "pelletmpc/qp_solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>

namespace pelletmpc {

/// Coefficient sequences for the integrality penalty (beta) and path barrier (gamma).
/// Both are zero at j = 0 and grow geometrically from j = 1.
struct PthSchedule {
    double beta_init = 0.1;
    double beta_inc = 3.0;
    double gamma_init = 0.3;
    double gamma_inc = 3.0;
    double epsilon = 1e-3;
    int j_max = 25;

    /// beta_init = 0.5 / N, beta_inc = 3 and gamma_j = beta_{j+1}.
    static PthSchedule for_horizon(int N)
    {
        require(N >= 1, "PthSchedule: N must be at least 1");
        PthSchedule s;
        s.beta_init = 0.5 / static_cast<double>(N);
        s.beta_inc = 3.0;
        s.gamma_init = s.beta_init * s.beta_inc;
        s.gamma_inc = s.beta_inc;
        return s;
    }

    void validate() const
    {
        require(beta_inc > 1.0, "PthSchedule: beta_inc must exceed 1");
        require(epsilon > 0.0 && epsilon < 0.5, "PthSchedule: epsilon must lie in (0, 0.5)");
        require(j_max >= 1, "PthSchedule: j_max must be at least 1");
        require(beta_init >= 0.0 && gamma_init >= 0.0 && gamma_inc > 0.0, "PthSchedule: negative coefficient");
    }

    double beta(int j) const { return j <= 0 ? 0.0 : beta_init * std::pow(beta_inc, j - 1); }
    double gamma(int j) const { return j <= 0 ? 0.0 : gamma_init * std::pow(gamma_inc, j - 1); }
};

struct RelaxedValue {
    double value = 0.0;
    Vector gradient;
};

struct SubproblemSettings {
    int max_iterations = 500;
    double stationarity_tol = 1e-7;
    double eigen_floor = 1e-8;
    double interior_margin = 1e-6;  ///< minimum barrier slack after restoration, relative to |h|
    double fraction_to_boundary = 0.995;
    double armijo = 1e-4;
};

struct SubproblemResult {
    Vector U;
    int iterations = 0;
    bool converged = false;
    bool interior_lost = false;  ///< barrier requested but no strictly feasible start exists
};

/// Original-unit slack h - G x_k of every path row at U.
inline Vector path_slack(const CondensedOcp& ocp, const Vector& U)
{
    return (ocp.b_ineq - ocp.A_ineq * U).cwiseProduct(ocp.row_scale);
}

/// Condensed objective + beta sum u(1-u) - gamma sum ln(h - G x_k).
inline RelaxedValue relaxed_objective(const Vector& U, const CondensedOcp& ocp, double beta, double gamma)
{
    require_dims(U.size() == ocp.dim(), "relaxed_objective: length mismatch");
    RelaxedValue r;
    const Vector HU = ocp.H * U;
    r.value = 0.5 * U.dot(HU) + ocp.g.dot(U) + ocp.constant;
    r.gradient = HU + ocp.g;
    if (beta != 0.0) {
        r.value += beta * (U.array() * (1.0 - U.array())).sum();
        r.gradient.array() += beta * (1.0 - 2.0 * U.array());
    }
    if (gamma != 0.0 && ocp.A_ineq.rows() > 0) {
        const Vector slack = path_slack(ocp, U);
        if ((slack.array() <= 0.0).any()) throw NumericalError("relaxed_objective: barrier argument not positive");
        r.value -= gamma * slack.array().log().sum();
        const Vector scaled_slack = slack.cwiseQuotient(ocp.row_scale);
        r.gradient += gamma * ocp.A_ineq.transpose() * scaled_slack.cwiseInverse();
    }
    return r;
}

namespace detail {

inline Vector project_box(const Vector& U, const Vector& lb, const Vector& ub)
{
    return U.cwiseMax(lb).cwiseMin(ub);
}

inline double projected_gradient_norm(const Vector& U, const Vector& grad, const Vector& lb, const Vector& ub)
{
    return (U - project_box(U - grad, lb, ub)).lpNorm<Eigen::Infinity>();
}

/// Concave-convex iteration for gamma = 0: the penalty is linearized at the current point and the
/// resulting convex QP is solved exactly, until the iterate stops moving.
inline SubproblemResult solve_penalized_qp(const CondensedOcp& ocp, double beta, const Vector& warm,
                                           const SubproblemSettings& s)
{
    SubproblemResult res;
    QpProblem qp{ocp.H, ocp.g, ocp.A_ineq, ocp.b_ineq, ocp.lb, ocp.ub};
    ActiveSetQpSolver solver;
    Vector U = warm.size() == ocp.dim() ? project_box(warm, ocp.lb, ocp.ub) : Vector(Vector::Zero(ocp.dim()));
    QpSolution last;
    last.u_star = U;
    for (int it = 0; it < s.max_iterations; ++it) {
        qp.g = ocp.g;
        if (beta != 0.0) qp.g.array() += beta * (1.0 - 2.0 * U.array());
        const QpSolution sol = solver.solve(qp, &last);
        res.iterations += 1;
        if (sol.status != QpStatus::optimal) {
            res.U = U;
            return res;
        }
        const double moved = (sol.u_star - U).lpNorm<Eigen::Infinity>();
        U = sol.u_star;
        last = sol;
        if (beta == 0.0 || moved <= 1e-12) {
            res.converged = true;
            break;
        }
    }
    res.U = U;
    return res;
}

/// Projected Newton on relaxed_objective from a strictly interior U, capped at `budget` iterations.
inline SubproblemResult projected_newton(const CondensedOcp& ocp, double beta, double gamma, Vector U,
                                         const SubproblemSettings& s, int budget)
{
    const Index d = ocp.dim();
    SubproblemResult res;
    const double gscale = 1.0 + ocp.g.lpNorm<Eigen::Infinity>();
    RelaxedValue cur = relaxed_objective(U, ocp, beta, gamma);
    for (int it = 0; it < budget; ++it) {
        res.iterations = it + 1;
        if (projected_gradient_norm(U, cur.gradient, ocp.lb, ocp.ub) <= s.stationarity_tol * gscale) {
            res.converged = true;
            break;
        }

        // Variables pinned at a box face with the gradient pushing outward are held fixed.
        std::vector<Index> free_idx;
        Vector dir = Vector::Zero(d);
        for (Index i = 0; i < d; ++i) {
            const bool at_lower = U(i) <= ocp.lb(i) + 1e-12 && cur.gradient(i) > 0.0;
            const bool at_upper = U(i) >= ocp.ub(i) - 1e-12 && cur.gradient(i) < 0.0;
            if (!at_lower && !at_upper) free_idx.push_back(i);
        }
        if (!free_idx.empty()) {
            const Index k = static_cast<Index>(free_idx.size());
            Matrix Hess = ocp.H;
            Hess.diagonal().array() -= 2.0 * beta;
            if (ocp.A_ineq.rows() > 0) {
                const Vector slack = ocp.b_ineq - ocp.A_ineq * U;
                const Vector w = slack.array().square().inverse();
                Hess += gamma * ocp.A_ineq.transpose() * w.asDiagonal() * ocp.A_ineq;
            }
            Matrix Hf(k, k);
            Vector gf(k);
            for (Index a = 0; a < k; ++a) {
                gf(a) = cur.gradient(free_idx[static_cast<std::size_t>(a)]);
                for (Index b = 0; b < k; ++b)
                    Hf(a, b) = Hess(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
            }
            Eigen::SelfAdjointEigenSolver<Matrix> es(Hf);
            const Vector ev = es.eigenvalues().cwiseMax(s.eigen_floor);
            const Matrix& V = es.eigenvectors();
            const Vector step = -V * (V.transpose() * gf).cwiseQuotient(ev);
            for (Index a = 0; a < k; ++a) dir(free_idx[static_cast<std::size_t>(a)]) = step(a);
        }

        // Backtracking along the projected path; trial points must keep every slack positive.
        const Vector slack0 = ocp.A_ineq.rows() > 0 ? Vector(ocp.b_ineq - ocp.A_ineq * U) : Vector(0);
        auto search = [&](double alpha, Vector& trial, RelaxedValue& next) {
            for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
                trial = project_box(U + alpha * dir, ocp.lb, ocp.ub);
                if (ocp.A_ineq.rows() > 0) {
                    const Vector slack = ocp.b_ineq - ocp.A_ineq * trial;
                    if ((slack.array() < (1.0 - s.fraction_to_boundary) * slack0.array()).any()) continue;
                }
                next = relaxed_objective(trial, ocp, beta, gamma);
                if (next.value <= cur.value + s.armijo * cur.gradient.dot(trial - U)) return true;
            }
            return false;
        };
        Vector trial;
        RelaxedValue next;
        bool accepted = search(1.0, trial, next);
        if (!accepted || (trial - U).lpNorm<Eigen::Infinity>() <= 1e-15) {
            // Newton direction failed; fall back to a projected gradient step.
            dir = -cur.gradient;
            accepted = search(1.0 / std::max(1.0, cur.gradient.lpNorm<Eigen::Infinity>()), trial, next);
            if (!accepted) break;
        }
        U = trial;
        cur = next;
    }
    res.U = U;
    return res;
}

}  // namespace detail

/// Local minimizer of relaxed_objective over the box with A_ineq U <= b_ineq.
inline SubproblemResult solve_subproblem(const CondensedOcp& ocp, double beta, double gamma, const Vector& warm,
                                         const SubproblemSettings& s = {})
{
    if (gamma == 0.0) return detail::solve_penalized_qp(ocp, beta, warm, s);
    const Index d = ocp.dim();
    SubproblemResult res;
    Vector U = warm.size() == d ? detail::project_box(warm, ocp.lb, ocp.ub) : Vector(Vector::Zero(d));

    // Pull the start toward U = 0 along U -> (1 - theta) U until every slack is at least the margin.
    if (ocp.A_ineq.rows() > 0) {
        const Vector margin = Vector::Constant(ocp.A_ineq.rows(), s.interior_margin);
        if ((ocp.b_ineq.array() < margin.array()).any()) {
            res.U = U;
            res.interior_lost = true;
            return res;
        }
        const Vector AU = ocp.A_ineq * U;
        double theta = 0.0;
        for (Index i = 0; i < AU.size(); ++i) {
            const double slack = ocp.b_ineq(i) - AU(i);
            if (slack < margin(i)) theta = std::max(theta, (margin(i) - slack) / AU(i));
        }
        U *= (1.0 - std::min(theta, 1.0));
    }

    return detail::projected_newton(ocp, beta, gamma, U, s, s.max_iterations);
}

struct PthResult {
    Vector u_star;
    Vector u_rounded;
    int j_used = 0;
    bool converged = false;
    double objective_true = 0.0;
    double cpu_time = 0.0;  ///< seconds
    long inner_iterations = 0;
    bool interior_lost = false;
};

inline bool within_epsilon_of_binary(const Vector& U, double eps)
{
    for (Index i = 0; i < U.size(); ++i)
        if (std::min(U(i), 1.0 - U(i)) > eps) return false;
    return true;
}

inline PthResult pth_homotopy(const CondensedOcp& ocp, const PthSchedule& schedule, const Vector& warm,
                              const SubproblemSettings& settings = {})
{
    schedule.validate();
    const auto start = std::chrono::steady_clock::now();
    PthResult r;
    Vector U = warm.size() == ocp.dim() ? warm : Vector(Vector::Zero(ocp.dim()));
    int j = 0;
    while (true) {
        const SubproblemResult sub = solve_subproblem(ocp, schedule.beta(j), schedule.gamma(j), U, settings);
        r.inner_iterations += sub.iterations;
        U = sub.U;
        if (sub.interior_lost) {
            r.interior_lost = true;
            break;
        }
        if (within_epsilon_of_binary(U, schedule.epsilon)) {
            r.converged = true;
            break;
        }
        if (j >= schedule.j_max) break;
        ++j;
    }
    r.j_used = j;
    r.u_star = U;
    r.u_rounded = r.converged ? Vector(U.array().round().matrix()) : Vector(Vector::Zero(ocp.dim()));
    r.objective_true = ocp.objective(r.u_rounded);
    r.cpu_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

class PthMpcController {
public:
    PthMpcController(PredictionSetup setup, std::optional<PthSchedule> schedule = std::nullopt,
                     SubproblemSettings settings = {})
        : setup_(std::move(setup)),
          schedule_(schedule ? *schedule : PthSchedule::for_horizon(setup_.horizon())),
          settings_(settings),
          warm_(Vector::Zero(setup_.horizon()))
    {
    }

    const PredictionSetup& setup() const { return setup_; }
    const PthSchedule& schedule() const { return schedule_; }
    void reset() { warm_ = Vector::Zero(setup_.horizon()); }

    ControlDecision step(const Vector& x0, double t)
    {
        const CondensedOcp ocp = setup_.assemble(x0, t);
        const PthResult res = pth_homotopy(ocp, schedule_, warm_, settings_);
        ControlDecision out;
        out.sequence = res.u_rounded;
        out.converged = res.converged;
        out.homotopy_iterations = res.j_used;
        out.inner_iterations = res.inner_iterations;
        out.status = res.converged ? "converged" : (res.interior_lost ? "no_interior" : "j_max");
        if (res.converged && !ocp.feasible(res.u_rounded, 1e-8)) {
            out.sequence = Vector::Zero(ocp.dim());
            out.status = "rounding_infeasible";
            out.fallback = true;
        }
        if (!res.converged) out.fallback = true;
        out.u0 = out.sequence(0) > 0.5 ? 1 : 0;
        out.objective = ocp.objective(out.sequence);
        warm_ = shift_warm_start(res.converged ? res.u_star : out.sequence);
        return out;
    }

private:
    PredictionSetup setup_;
    PthSchedule schedule_;
    SubproblemSettings settings_;
    Vector warm_;
};

}  // namespace pelletmpc
