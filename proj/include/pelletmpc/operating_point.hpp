#pragma once

#include "pelletmpc/ocp.hpp"
#include "pelletmpc/plasma_model.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <cstdint>

namespace pelletmpc {

struct OperatingPoint {
    Vector x;                   ///< steady profile under the averaged pellet source
    double pellets_per_interval = 0.0;
    double line_average = 0.0;
};

/// Profile reached after `duration` seconds of RK4 under a constant fraction of the pellet source,
/// spread over the whole control interval instead of the ablation window.
inline Vector march_under_average_source(const PlasmaModel& model, const PelletSpec& pellet, double T_s,
                                         double pellets_per_interval, const Vector& start, double dt,
                                         double duration)
{
    const Vector source = pellet_source(pellet, model.grid, model.device) *
                          (pellets_per_interval * pellet.ablation_duration / T_s);
    const long steps = std::lround(duration / dt);
    Vector x = start;
    for (long k = 0; k < steps; ++k) x = rk4_step(x, source, dt, model);
    return x;
}

/// Finds the average firing rate whose steady profile has the requested line average.
inline OperatingPoint fueled_equilibrium(const PlasmaModel& model, const PelletSpec& pellet, double T_s,
                                         double dt, double target_line_average, const Vector& start,
                                         double settle_time = 30.0)
{
    require(target_line_average > 0.0, "fueled_equilibrium: target must be positive");
    auto residual = [&](double rate) {
        const Vector x = march_under_average_source(model, pellet, T_s, rate, start, dt, settle_time);
        return line_avg_density(x, model.grid) / target_line_average - 1.0;
    };
    double lo = 1e-3;
    double hi = 1.0;
    double f_lo = residual(lo);
    double f_hi = residual(hi);
    for (int k = 0; k < 8 && f_hi < 0.0; ++k) {
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = residual(hi);
    }
    require(f_lo < 0.0 && f_hi > 0.0, "fueled_equilibrium: target line average not bracketed");
    std::uintmax_t max_iter = 60;
    const auto root = boost::math::tools::toms748_solve(
        residual, lo, hi, f_lo, f_hi, boost::math::tools::eps_tolerance<double>(40), max_iter);
    OperatingPoint op;
    op.pellets_per_interval = 0.5 * (root.first + root.second);
    op.x = march_under_average_source(model, pellet, T_s, op.pellets_per_interval, start, dt, settle_time);
    op.line_average = line_avg_density(op.x, model.grid);
    return op;
}

}  // namespace pelletmpc
