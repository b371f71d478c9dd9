#pragma once

#include "pelletmpc/controller.hpp"
#include "pelletmpc/ocp.hpp"
#include "pelletmpc/qp_solver.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <queue>
#include <vector>

namespace pelletmpc {

struct BnbConfig {
    double abs_gap = 0.0;
    double rel_gap = 1e-9;
    long max_nodes = 1L << 22;
    double integrality_tol = 1e-9;
    double feasibility_tol = 1e-8;
};

enum class MipStatus { optimal, fallback };

struct MipSolution {
    Vector u_star;
    double objective = 0.0;
    MipStatus status = MipStatus::fallback;
    long nodes_explored = 0;
    long qp_iterations = 0;
    double cpu_time = 0.0;  ///< seconds
};

namespace detail {

struct BnbNode {
    double bound;
    long id;
    Vector lb;
    Vector ub;
    QpSolution parent;
};

struct BnbNodeOrder {
    bool operator()(const BnbNode& a, const BnbNode& b) const
    {
        if (a.bound != b.bound) return a.bound > b.bound;
        return a.id > b.id;
    }
};

inline bool is_binary(const Vector& u, double tol)
{
    for (Index i = 0; i < u.size(); ++i)
        if (std::min(std::abs(u(i)), std::abs(1.0 - u(i))) > tol) return false;
    return true;
}

}  // namespace detail

/// Best-first branch and bound over {0,1}^d with most-fractional branching.
inline MipSolution solve_bnb(const CondensedOcp& ocp, const BnbConfig& cfg = {},
                             const std::optional<Vector>& warm = std::nullopt)
{
    const auto start = std::chrono::steady_clock::now();
    const Index d = ocp.dim();
    MipSolution best;
    best.u_star = Vector::Zero(d);
    bool have_incumbent = false;

    auto offer = [&](const Vector& u) {
        if (!ocp.feasible(u, cfg.feasibility_tol)) return;
        const double J = ocp.objective(u);
        if (!have_incumbent || J < best.objective) {
            best.u_star = u;
            best.objective = J;
            have_incumbent = true;
        }
    };
    if (warm && warm->size() == d && detail::is_binary(*warm, 0.0)) offer(*warm);
    offer(Vector::Zero(d));

    auto prune_level = [&]() {
        return best.objective - std::max(cfg.abs_gap, cfg.rel_gap * std::abs(best.objective));
    };

    ActiveSetQpSolver qp;
    std::priority_queue<detail::BnbNode, std::vector<detail::BnbNode>, detail::BnbNodeOrder> open;
    long next_id = 0;
    open.push({-std::numeric_limits<double>::infinity(), next_id++, ocp.lb, ocp.ub, QpSolution{}});

    while (!open.empty() && best.nodes_explored < cfg.max_nodes) {
        detail::BnbNode node = open.top();
        open.pop();
        if (have_incumbent && node.bound >= prune_level()) continue;

        QpProblem relax{ocp.H, ocp.g, ocp.A_ineq, ocp.b_ineq, node.lb, node.ub};
        const QpSolution sol = qp.solve(relax, node.parent.u_star.size() == d ? &node.parent : nullptr);
        ++best.nodes_explored;
        best.qp_iterations += sol.iterations;
        if (sol.status != QpStatus::optimal) continue;

        // Relaxation value minus the largest possible contribution of the diagonal shift.
        const double bound = sol.objective + ocp.constant - 0.5 * sol.regularization * static_cast<double>(d);
        if (have_incumbent && bound >= prune_level()) continue;

        Index branch = -1;
        double frac = cfg.integrality_tol;
        for (Index j = 0; j < d; ++j) {
            const double f = std::min(sol.u_star(j) - node.lb(j), node.ub(j) - sol.u_star(j));
            if (node.lb(j) == node.ub(j)) continue;
            if (f > frac) {
                frac = f;
                branch = j;
            }
        }
        if (branch < 0) {
            offer(sol.u_star.array().round().matrix());
            continue;
        }
        for (int side = 0; side < 2; ++side) {
            detail::BnbNode child{bound, next_id++, node.lb, node.ub, sol};
            child.lb(branch) = child.ub(branch) = static_cast<double>(side);
            open.push(std::move(child));
        }
    }

    best.status = have_incumbent ? MipStatus::optimal : MipStatus::fallback;
    if (!have_incumbent) {
        best.u_star = Vector::Zero(d);
        best.objective = ocp.objective(best.u_star);
    }
    best.cpu_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return best;
}

class MiMpcController {
public:
    MiMpcController(PredictionSetup setup, BnbConfig cfg = {}) : setup_(std::move(setup)), cfg_(cfg) {}

    const PredictionSetup& setup() const { return setup_; }
    void reset() { warm_.reset(); }

    ControlDecision step(const Vector& x0, double t)
    {
        const CondensedOcp ocp = setup_.assemble(x0, t);
        const MipSolution sol = solve_bnb(ocp, cfg_, warm_);
        ControlDecision out;
        out.u0 = sol.u_star(0) > 0.5 ? 1 : 0;
        out.objective = sol.objective;
        out.fallback = sol.status == MipStatus::fallback;
        out.status = out.fallback ? "fallback" : "optimal";
        out.nodes = sol.nodes_explored;
        out.qp_iterations = sol.qp_iterations;
        out.sequence = sol.u_star;
        warm_ = shift_warm_start(sol.u_star);
        return out;
    }

private:
    PredictionSetup setup_;
    BnbConfig cfg_;
    std::optional<Vector> warm_;
};

}  // namespace pelletmpc
