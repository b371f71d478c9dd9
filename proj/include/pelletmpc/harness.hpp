#pragma once

#include "pelletmpc/controller.hpp"
#include "pelletmpc/mi_mpc.hpp"
#include "pelletmpc/ocp.hpp"
#include "pelletmpc/operating_point.hpp"
#include "pelletmpc/plasma_model.hpp"
#include "pelletmpc/prediction_model.hpp"
#include "pelletmpc/pth_mpc.hpp"
#include "pelletmpc/scenario.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pelletmpc {

inline constexpr const char* version_string = "pelletmpc 0.3.1";

/// Fires iff the measured line average is strictly below the target.
inline int relay_step(double nbar, double nbar_ref) { return nbar < nbar_ref ? 1 : 0; }

/// One row per plant substep. Control fields are set only on the first substep after a decision.
struct TraceRow {
    double t = 0.0;
    std::optional<int> u;
    std::optional<double> cpu_ms;
    std::optional<double> objective;
    double nbar = 0.0;
    double n_edge = 0.0;
    Vector x;

    bool operator==(const TraceRow& o) const
    {
        auto same = [](const std::optional<double>& a, const std::optional<double>& b) {
            if (a.has_value() != b.has_value()) return false;
            if (!a) return true;
            return std::memcmp(&*a, &*b, sizeof(double)) == 0;
        };
        return t == o.t && u == o.u && same(cpu_ms, o.cpu_ms) && same(objective, o.objective) && nbar == o.nbar &&
               n_edge == o.n_edge && x.size() == o.x.size() && x == o.x;
    }
};

struct StepRecord {
    double t = 0.0;
    Vector x0;          ///< state measured at the decision instant
    double reference = 0.0;
    ControlDecision decision;
    double cpu_ms = 0.0;
};

struct ClosedLoopTrace {
    std::vector<TraceRow> rows;
    std::vector<StepRecord> steps;
    Vector node_radii;
    double limit = 0.0;  ///< edge density limit used for audits
    Index edge_index = 0;
    bool aborted = false;
    std::string abort_reason;
};

/// Builds the prediction side (operating point, extended model, weights, limit) once per scenario.
struct ScenarioModels {
    PlasmaModel plant;
    OperatingPoint operating_point;
    ExtendedLtiModel extended;
    Weights weights;
    PathConstraint path;
    double limit = 0.0;
    Vector initial_state;

    explicit ScenarioModels(const ScenarioConfig& cfg) : plant(cfg.plasma_model())
    {
        const Vector parabolic = parabolic_profile(plant.grid, cfg.initial_line_average, cfg.initial_T_core);
        operating_point = fueled_equilibrium(plant, cfg.pellet, cfg.T_s, cfg.T_s_zoh, cfg.initial_line_average,
                                             parabolic);
        const ContinuousLinearModel lin = jacobian(plant, cfg.pellet, operating_point.x);
        extended = build_extended_model(lin, cfg.T_s, cfg.T_s_zoh, cfg.include_drift);
        weights = Weights::width_scaled(plant.grid, cfg.weight_scale);
        limit = greenwald_limit(cfg.device.I_p, cfg.device.a);
        path = PathConstraint::edge_density_limit(plant.grid, limit, cfg.constraint_radius);
        initial_state = cfg.initial_profile == InitialProfile::equilibrium ? operating_point.x : parabolic;
    }

    PredictionSetup setup(int N, const ReferenceSignal& ref) const
    {
        return PredictionSetup(extended, N, weights, path, ref);
    }
};

/// Type-erased controller used by the closed loop.
class Controller {
public:
    virtual ~Controller() = default;
    virtual ControlDecision step(const Vector& x0, double t) = 0;
};

class RelayController final : public Controller {
public:
    RelayController(RadialGrid grid, ReferenceSignal ref) : grid_(std::move(grid)), ref_(std::move(ref)) {}

    ControlDecision step(const Vector& x0, double t) override
    {
        ControlDecision d;
        d.u0 = relay_step(line_avg_density(x0, grid_), ref_.at(t));
        d.objective = std::numeric_limits<double>::quiet_NaN();
        d.status = "relay";
        d.sequence = Vector::Constant(1, d.u0);
        return d;
    }

private:
    RadialGrid grid_;
    ReferenceSignal ref_;
};

template <class Inner>
class PredictiveController final : public Controller {
public:
    explicit PredictiveController(Inner inner) : inner_(std::move(inner)) {}
    ControlDecision step(const Vector& x0, double t) override { return inner_.step(x0, t); }

private:
    Inner inner_;
};

inline std::unique_ptr<Controller> make_controller(const ScenarioConfig& cfg, const ScenarioModels& models)
{
    switch (cfg.controller) {
    case ControllerKind::relay: return std::make_unique<RelayController>(models.plant.grid, cfg.reference);
    case ControllerKind::mi:
        return std::make_unique<PredictiveController<MiMpcController>>(
            MiMpcController(models.setup(cfg.horizon, cfg.reference), cfg.bnb));
    case ControllerKind::pth:
        return std::make_unique<PredictiveController<PthMpcController>>(
            PthMpcController(models.setup(cfg.horizon, cfg.reference), cfg.schedule.apply(cfg.horizon)));
    }
    throw InvalidArgument("unknown controller kind");
}

inline int control_decision_count(const ScenarioConfig& cfg)
{
    const double span = cfg.t_end - cfg.t_start;
    if (span <= 0.0) return 0;
    return static_cast<int>(std::floor(span / cfg.T_s + 1e-9));
}

/// Full-state feedback loop: measure, decide (timed), then integrate one control interval.
inline ClosedLoopTrace run_closed_loop(const ScenarioConfig& cfg, const ScenarioModels& models, Controller& ctrl)
{
    ClosedLoopTrace trace;
    trace.node_radii = models.plant.grid.nodes();
    trace.limit = models.limit;
    trace.edge_index = models.plant.grid.index_of(cfg.constraint_radius);
    const int steps = control_decision_count(cfg);
    const int tau = substeps_per_interval(cfg.T_s, cfg.T_s_zoh);
    trace.rows.reserve(static_cast<std::size_t>(steps * tau));
    trace.steps.reserve(static_cast<std::size_t>(steps));

    Vector x = models.initial_state;
    for (int k = 0; k < steps; ++k) {
        const double t = cfg.t_start + k * cfg.T_s;
        const auto start = std::chrono::steady_clock::now();
        ControlDecision d = ctrl.step(x, t);
        const double cpu_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

        StepRecord rec;
        rec.t = t;
        rec.x0 = x;
        rec.reference = cfg.reference.at(t);
        rec.decision = d;
        rec.cpu_ms = cpu_ms;
        trace.steps.push_back(rec);

        try {
            x = simulate_control_interval(x, d.u0 == 1, cfg.pellet, models.plant, cfg.T_s, cfg.T_s_zoh,
                                          [&](int s, const Vector& state) {
                                              TraceRow row;
                                              row.t = t + (s + 1) * cfg.T_s_zoh;
                                              if (s == 0) {
                                                  row.u = d.u0;
                                                  row.cpu_ms = cpu_ms;
                                                  if (std::isfinite(d.objective)) row.objective = d.objective;
                                              }
                                              row.nbar = line_avg_density(state, models.plant.grid);
                                              row.n_edge = state(trace.edge_index);
                                              row.x = state;
                                              trace.rows.push_back(std::move(row));
                                          });
        } catch (const NumericalError& e) {
            trace.aborted = true;
            trace.abort_reason = std::string("plant integration failed at t = ") + std::to_string(t) + ": " + e.what();
            break;
        }
    }
    return trace;
}

inline ClosedLoopTrace run_closed_loop(const ScenarioConfig& cfg)
{
    const ScenarioModels models(cfg);
    auto ctrl = make_controller(cfg, models);
    return run_closed_loop(cfg, models, *ctrl);
}

struct MetricsReport {
    double reachable_error_pct = 0.0;
    double unreachable_error_pct = 0.0;
    double cpu_max_ms = 0.0;
    double cpu_mean_ms = 0.0;
    int violations = 0;                ///< sampling instants above limit (1 + 1e-6)
    int violations_unreachable = 0;    ///< of which inside [2, 6)
    double worst_excess_rel = 0.0;     ///< max (n_edge / limit - 1) at sampling instants, floored at 0
    double max_substep_ratio = 0.0;    ///< max n_edge / limit over all substeps
    int substep_excursions = 0;        ///< substeps above 1.02 limit
    int pellets = 0;
    int fallbacks = 0;
    int max_homotopy_iterations = 0;
    int decisions = 0;
};

inline bool in_unreachable_window(double t) { return t >= 2.0 && t < 6.0; }

/// Mean absolute percentage error per window over substeps plus CPU and constraint audits.
inline MetricsReport compute_metrics(const ClosedLoopTrace& trace, const ReferenceSignal& reference,
                                     double tol = 1e-6, double excursion = 1.02)
{
    MetricsReport m;
    double reach_sum = 0.0, unreach_sum = 0.0;
    long reach_n = 0, unreach_n = 0;
    for (const TraceRow& row : trace.rows) {
        const double ref = reference.at(row.t);
        const double err = 100.0 * std::abs(row.nbar - ref) / ref;
        if (in_unreachable_window(row.t)) {
            unreach_sum += err;
            ++unreach_n;
        } else {
            reach_sum += err;
            ++reach_n;
        }
        if (trace.limit > 0.0) {
            const double ratio = row.n_edge / trace.limit;
            m.max_substep_ratio = std::max(m.max_substep_ratio, ratio);
            if (ratio > excursion) ++m.substep_excursions;
        }
    }
    m.reachable_error_pct = reach_n ? reach_sum / reach_n : 0.0;
    m.unreachable_error_pct = unreach_n ? unreach_sum / unreach_n : 0.0;

    // Sampling instants: the initial measurement and the end of every control interval.
    auto audit = [&](double t, double n_edge) {
        if (trace.limit <= 0.0) return;
        const double rel = n_edge / trace.limit - 1.0;
        m.worst_excess_rel = std::max(m.worst_excess_rel, rel);
        if (n_edge > trace.limit * (1.0 + tol)) {
            ++m.violations;
            if (in_unreachable_window(t)) ++m.violations_unreachable;
        }
    };
    for (const StepRecord& s : trace.steps) audit(s.t, s.x0(trace.edge_index));
    if (!trace.rows.empty()) audit(trace.rows.back().t, trace.rows.back().n_edge);

    double cpu_sum = 0.0;
    for (const StepRecord& s : trace.steps) {
        m.cpu_max_ms = std::max(m.cpu_max_ms, s.cpu_ms);
        cpu_sum += s.cpu_ms;
        m.pellets += s.decision.u0;
        if (s.decision.fallback) ++m.fallbacks;
        m.max_homotopy_iterations = std::max(m.max_homotopy_iterations, s.decision.homotopy_iterations);
    }
    m.decisions = static_cast<int>(trace.steps.size());
    m.cpu_mean_ms = m.decisions ? cpu_sum / m.decisions : 0.0;
    return m;
}

inline nlohmann::json to_json(const MetricsReport& m)
{
    return {{"reachable_error_pct", m.reachable_error_pct},
            {"unreachable_error_pct", m.unreachable_error_pct},
            {"cpu_max_ms", m.cpu_max_ms},
            {"cpu_mean_ms", m.cpu_mean_ms},
            {"violations", m.violations},
            {"violations_unreachable", m.violations_unreachable},
            {"worst_excess_rel", m.worst_excess_rel},
            {"max_substep_ratio", m.max_substep_ratio},
            {"substep_excursions", m.substep_excursions},
            {"pellets", m.pellets},
            {"fallbacks", m.fallbacks},
            {"max_homotopy_iterations", m.max_homotopy_iterations},
            {"decisions", m.decisions}};
}

}  // namespace pelletmpc
