#pragma once

#include "pelletmpc/plasma_model.hpp"
#include "pelletmpc/prediction_model.hpp"
#include "pelletmpc/types.hpp"

#include <numbers>
#include <vector>

namespace pelletmpc {

inline constexpr double density_unit = 1e20;

/// Edge density limit I_p / (pi a^2) in m^-3 (I_p in MA, a in m).
inline double greenwald_limit(double I_p_MA, double a)
{
    return I_p_MA / (std::numbers::pi * a * a) * density_unit;
}

/// (1/a) int_0^a n dr by the trapezoid rule on the node radii.
inline double line_avg_density(const Vector& n_e, const RadialGrid& grid)
{
    require_dims(n_e.size() == grid.size() || n_e.size() == grid.state_dim(),
                 "line_avg_density: profile length mismatch");
    double integral = 0.0;
    for (Index i = 0; i + 1 < grid.size(); ++i)
        integral += 0.5 * (n_e(i) + n_e(i + 1)) * (grid.node(i + 1) - grid.node(i));
    return integral / grid.minor_radius();
}

/// Piecewise-constant, right-continuous target for the line-averaged density.
struct ReferenceSignal {
    std::vector<double> breakpoints{0.0, 2.0, 6.0};
    std::vector<double> levels{1e20, 2e20, 1e20};

    void validate() const
    {
        require(!breakpoints.empty() && breakpoints.size() == levels.size(),
                "ReferenceSignal: breakpoints and levels must be non-empty and equally long");
        for (std::size_t i = 1; i < breakpoints.size(); ++i)
            require(breakpoints[i] > breakpoints[i - 1], "ReferenceSignal: breakpoints must increase");
        for (double l : levels) require(l >= 0.0, "ReferenceSignal: levels must be non-negative");
    }

    double at(double t) const
    {
        double level = levels.front();
        for (std::size_t i = 0; i < breakpoints.size(); ++i)
            if (t >= breakpoints[i]) level = levels[i];
        return level;
    }
};

inline Vector build_reference_state(double level, Index n)
{
    require(level >= 0.0, "build_reference_state: level must be non-negative");
    require_dims(n % 2 == 0, "build_reference_state: state dimension must be even");
    Vector x = Vector::Zero(n);
    x.head(n / 2).setConstant(level);
    return x;
}

struct Weights {
    Matrix Q;
    Matrix R;
    Matrix P;

    /// Density entries scale * (width_i / a) / 1e40, temperature entries 0, R = 0, P = Q.
    static Weights width_scaled(const RadialGrid& grid, double scale = 1.0, double input_weight = 0.0)
    {
        require(scale > 0.0, "Weights: scale must be positive");
        const Index m = grid.size();
        Vector q = Vector::Zero(2 * m);
        q.head(m) = scale * grid.widths() / grid.minor_radius() / (density_unit * density_unit);
        Weights w;
        w.Q = q.asDiagonal();
        w.P = w.Q;
        w.R = Matrix::Constant(1, 1, input_weight);
        return w;
    }
};

/// Rows of G x <= h.
struct PathConstraint {
    Matrix G;
    Vector h;

    static PathConstraint edge_density_limit(const RadialGrid& grid, double limit, double radius = 1.8)
    {
        PathConstraint pc;
        pc.G = Matrix::Zero(1, grid.state_dim());
        pc.G(0, grid.index_of(radius)) = 1.0;
        pc.h = Vector::Constant(1, limit);
        return pc;
    }

    Index rows() const { return G.rows(); }
};

/// 1/2 U'HU + g'U + constant over U in [lb, ub]^(mN) subject to A_ineq U <= b_ineq.
/// Each constraint row is divided by |h| of its path row (row_scale) so entries are O(1).
struct CondensedOcp {
    Matrix H;
    Vector g;
    double constant = 0.0;
    Matrix A_ineq;
    Vector b_ineq;
    Vector lb;
    Vector ub;
    Vector row_scale;
    int N = 1;

    Index dim() const { return g.size(); }

    double objective(const Vector& U) const { return 0.5 * U.dot(H * U) + g.dot(U) + constant; }

    /// Largest positive A_ineq U - b_ineq, in units of the original constraint rows.
    double max_violation(const Vector& U) const
    {
        if (A_ineq.rows() == 0) return 0.0;
        return ((A_ineq * U - b_ineq).cwiseProduct(row_scale)).maxCoeff();
    }

    bool feasible(const Vector& U, double tol) const
    {
        if (A_ineq.rows() == 0) return true;
        return ((A_ineq * U - b_ineq).array() <= tol).all();
    }
};

inline CondensedOcp condense_ocp(const CondensedPrediction& pred, const Vector& x_eq, const Weights& w,
                                 const PathConstraint& pc, const Vector& x0, const Vector& x_ref)
{
    const Index n = pred.n();
    const int N = pred.N;
    const Index mN = pred.Gamma.cols();
    const Index m = mN / N;
    const Index p = pc.rows();
    require_dims(x0.size() == n && x_ref.size() == n && x_eq.size() == n, "condense_ocp: state length mismatch");
    require_dims(w.Q.rows() == n && w.P.rows() == n && w.R.rows() == m, "condense_ocp: weight size mismatch");
    require_dims(pc.G.cols() == n && pc.h.size() == p, "condense_ocp: constraint size mismatch");

    const Vector free = pred.Phi * (x0 - x_eq) + pred.offset;
    Vector err = free;
    for (int k = 0; k < N; ++k) err.segment(k * n, n) -= x_ref;

    // Stage weights are diagonal in practice but handled densely here.
    Matrix QG(n * N, mN);
    for (int k = 0; k < N; ++k) {
        const Matrix& Wk = k + 1 == N ? w.P : w.Q;
        QG.middleRows(k * n, n) = Wk * pred.Gamma.middleRows(k * n, n);
    }
    CondensedOcp ocp;
    ocp.N = N;
    ocp.H = 2.0 * (pred.Gamma.transpose() * QG);
    for (int k = 0; k < N; ++k) ocp.H.block(k * m, k * m, m, m) += 2.0 * w.R;
    ocp.H = 0.5 * (ocp.H + ocp.H.transpose()).eval();
    ocp.g = 2.0 * (QG.transpose() * err);

    const Vector e0 = x0 - x_ref;
    double c = e0.dot(w.Q * e0);
    for (int k = 0; k < N; ++k) {
        const Matrix& Wk = k + 1 == N ? w.P : w.Q;
        const auto ek = err.segment(k * n, n);
        c += ek.dot(Wk * ek);
    }
    ocp.constant = c;

    ocp.A_ineq.resize(p * N, mN);
    ocp.b_ineq.resize(p * N);
    ocp.row_scale.resize(p * N);
    for (int k = 0; k < N; ++k) {
        for (Index r = 0; r < p; ++r) {
            const Index row = k * p + r;
            const double s = std::abs(pc.h(r)) > 0.0 ? std::abs(pc.h(r)) : 1.0;
            ocp.row_scale(row) = s;
            ocp.A_ineq.row(row) = pc.G.row(r) * pred.Gamma.middleRows(k * n, n) / s;
            ocp.b_ineq(row) = (pc.h(r) - pc.G.row(r).dot(free.segment(k * n, n))) / s;
        }
    }
    ocp.lb = Vector::Zero(mN);
    ocp.ub = Vector::Ones(mN);
    return ocp;
}

/// Stage cost summed by explicit recursion of the extended model, x_0 included.
inline double rollout_objective(const ExtendedLtiModel& model, const Weights& w, const Vector& x0,
                                const Vector& x_ref, const Vector& U)
{
    const Index m = model.m();
    const Index N = U.size() / m;
    Vector x = x0;
    double J = 0.0;
    for (Index k = 0; k < N; ++k) {
        const Vector e = x - x_ref;
        const Vector u = U.segment(k * m, m);
        J += e.dot(w.Q * e) + u.dot(w.R * u);
        x = model.step(x, u);
    }
    const Vector e = x - x_ref;
    return J + e.dot(w.P * e);
}

}  // namespace pelletmpc
