// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

#include "pelletmpc/harness.hpp"
#include "pelletmpc/verify.hpp"

#include <cstdio>
#include <map>
#include <string>
#include <utility>

using namespace pelletmpc;

namespace {

constexpr double substep_ratio_limit = 1.02;
constexpr double bnb_rel_tol = 1e-6;
constexpr double pth_median_gap_limit = 0.10;
constexpr double pth_mi_reach_gap_pp = 1.0;
constexpr double reach_error_limit_pct = 5.0;
constexpr double unreach_error_lo_pct = 20.0;
constexpr double unreach_error_hi_pct = 40.0;
constexpr double realtime_limit_ms = 100.0;
constexpr double zoh_limit = 1e-6;
constexpr double jacobian_limit = 1e-4;
constexpr double balance_limit = 1e-12;
constexpr double kkt_limit = 1e-7;
constexpr std::size_t oracle_states = 50;
constexpr std::uint64_t seed = 0;

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail)
{
    std::printf("criterion %d  %-44s %s  %s\n", id, name, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

}  // namespace

int main()
{
    const ScenarioConfig base;
    const ScenarioModels models(base);

    std::map<std::pair<ControllerKind, int>, MetricsReport> runs;
    ClosedLoopTrace mi5_trace;
    auto run = [&](ControllerKind kind, int N) {
        ScenarioConfig cfg = base;
        cfg.controller = kind;
        cfg.horizon = N;
        auto ctrl = make_controller(cfg, models);
        ClosedLoopTrace trace = run_closed_loop(cfg, models, *ctrl);
        runs[{kind, N}] = compute_metrics(trace, cfg.reference);
        if (kind == ControllerKind::mi && N == 5) mi5_trace = std::move(trace);
    };
    const int horizons[] = {2, 5, 10, 20};
    run(ControllerKind::relay, base.horizon);
    for (int N : horizons)
        for (ControllerKind kind : {ControllerKind::mi, ControllerKind::pth}) run(kind, N);

    // 1: predictive controllers keep the edge density below the limit.
    {
        bool ok = true;
        std::string detail;
        for (int N : horizons)
            for (ControllerKind kind : {ControllerKind::mi, ControllerKind::pth}) {
                const MetricsReport& m = runs.at({kind, N});
                ok = ok && m.violations == 0 && m.max_substep_ratio <= substep_ratio_limit;
                detail += fmt("%s%d: %d/%.4f ", to_string(kind).c_str(), N, m.violations, m.max_substep_ratio);
            }
        report(1, "constraint satisfaction (violations/max ratio)", ok, detail);
    }

    // 2: the relay baseline overshoots while the target is unreachable.
    {
        const MetricsReport& m = runs.at({ControllerKind::relay, base.horizon});
        report(2, "relay violates in unreachable window", m.violations_unreachable >= 1,
               fmt("%d violations in [2, 6), max ratio %.4f", m.violations_unreachable, m.max_substep_ratio));
    }

    const auto states = sample_states(mi5_trace, oracle_states, seed);

    // 3: branch and bound returns the enumeration optimum.
    {
        bool ok = states.size() == oracle_states;
        std::string detail;
        for (int N : {2, 5}) {
            const OracleReport r = bnb_vs_enumeration(models.setup(N, base.reference), states, base.bnb, bnb_rel_tol);
            ok = ok && r.matched == r.instances;
            detail += fmt("N=%d %d/%d (max rel diff %.2e) ", N, r.matched, r.instances, r.max_rel_diff);
        }
        report(3, "branch and bound matches enumeration", ok, detail);
    }

    // 4: homotopy solutions are binary, feasible and close to optimal.
    {
        const PthQualityReport q =
            pth_vs_enumeration(models.setup(5, base.reference), states, PthSchedule::for_horizon(5));
        const double reach_gap = std::abs(runs.at({ControllerKind::pth, 5}).reachable_error_pct -
                                          runs.at({ControllerKind::mi, 5}).reachable_error_pct);
        const bool ok = q.binary_feasible == q.instances && q.median_gap <= pth_median_gap_limit &&
                        reach_gap <= pth_mi_reach_gap_pp;
        report(4, "homotopy quality", ok,
               fmt("%d/%d binary feasible, median gap %.4f (limit %.2f), reach gap %.2f pp (limit %.1f)",
                   q.binary_feasible, q.instances, q.median_gap, pth_median_gap_limit, reach_gap,
                   pth_mi_reach_gap_pp));
    }

    // 5: tracking accuracy at the default horizon.
    {
        bool ok = true;
        std::string detail;
        for (ControllerKind kind : {ControllerKind::mi, ControllerKind::pth}) {
            const MetricsReport& m = runs.at({kind, 5});
            ok = ok && m.reachable_error_pct <= reach_error_limit_pct &&
                 m.unreachable_error_pct >= unreach_error_lo_pct && m.unreachable_error_pct <= unreach_error_hi_pct;
            detail += fmt("%s5 reach %.2f%% unreach %.2f%% ", to_string(kind).c_str(), m.reachable_error_pct,
                          m.unreachable_error_pct);
        }
        report(5, "tracking error at N=5", ok, detail);
    }

    // 6: the barrier schedule escapes an active path row where the penalty alone sticks.
    {
        const CondensedOcp ocp = sticking_instance();
        PthSchedule penalty_only = PthSchedule::for_horizon(5);
        penalty_only.gamma_init = 0.0;
        const PthResult stuck = pth_homotopy(ocp, penalty_only, Vector::Zero(5));
        const PthSchedule def = PthSchedule::for_horizon(5);
        const PthResult escaped = pth_homotopy(ocp, def, Vector::Zero(5));
        const bool ok = !stuck.converged && stuck.j_used == penalty_only.j_max && escaped.converged &&
                        ocp.feasible(escaped.u_rounded, 1e-8) && std::abs(def.beta(1) - 0.1) <= 1e-15;
        report(6, "sticking regression", ok,
               fmt("penalty only: converged=%d j=%d u0=%.4f; default: converged=%d j=%d; beta_1=%.3f",
                   stuck.converged, stuck.j_used, stuck.u_star(0), escaped.converged, escaped.j_used, def.beta(1)));
    }

    // 7: computation time.
    {
        const double mi20 = runs.at({ControllerKind::mi, 20}).cpu_max_ms;
        const double pth20 = runs.at({ControllerKind::pth, 20}).cpu_max_ms;
        bool ok = pth20 < mi20;
        std::string detail = fmt("N=20 max mi %.2f ms pth %.2f ms; ", mi20, pth20);
        for (int N : {2, 5, 10})
            for (ControllerKind kind : {ControllerKind::mi, ControllerKind::pth}) {
                const double c = runs.at({kind, N}).cpu_max_ms;
                ok = ok && c < realtime_limit_ms;
                detail += fmt("%s%d %.2f ", to_string(kind).c_str(), N, c);
            }
        report(7, "computation time", ok, detail);
    }

    // 8: numerical kernels.
    {
        const ContinuousLinearModel lin = jacobian(models.plant, base.pellet, models.operating_point.x);
        Vector dx0 = Vector::Zero(lin.n());
        dx0.head(models.plant.nodes()).setConstant(0.05e20);
        const double zoh = zoh_consistency_error(lin, models.extended, dx0, 1.0);
        const double jac = jacobian_directional_error(models.plant, lin, 10, seed);
        const Vector src = pellet_source(base.pellet, models.plant.grid, models.plant.device);
        const double bal = particle_balance_error(models.plant, models.operating_point.x, src);
        const KktSuiteReport kkt = qp_kkt_suite(200, seed);
        const double kkt_worst =
            std::max({kkt.worst_primal, kkt.worst_stationarity, kkt.worst_complementarity, kkt.worst_dual});
        const bool ok = zoh <= zoh_limit && jac <= jacobian_limit && bal <= balance_limit &&
                        kkt.optimal == kkt.instances && kkt_worst <= kkt_limit;
        report(8, "numerical kernels", ok,
               fmt("zoh %.2e jacobian %.2e balance %.2e kkt %.2e (%d/%d optimal)", zoh, jac, bal, kkt_worst,
                   kkt.optimal, kkt.instances));
    }

    std::printf("%d of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
