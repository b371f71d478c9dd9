#pragma once

#include "pelletmpc/plasma_model.hpp"
#include "pelletmpc/types.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <functional>

namespace pelletmpc {

/// Affine model dx/dt = A_c (x - x_eq) + B_c (u - u_eq) + drift around an operating point.
struct ContinuousLinearModel {
    Matrix A_c;
    Matrix B_c;
    Vector x_eq;
    Vector u_eq;
    Vector drift;        ///< f(x_eq, u_eq); zero at a true equilibrium
    Vector state_scale;  ///< typical magnitude per state, used for conditioning only

    Index n() const { return A_c.rows(); }
    Index m() const { return B_c.cols(); }
};

/// Discrete map x+ = x_eq + A (x - x_eq) + B u + d for one hold interval.
struct ZohModel {
    Matrix A;
    Matrix B;
    Vector d;
};

struct ExtendedLtiModel {
    Matrix A_bar;
    Matrix B_bar;
    Vector d_bar;
    Vector x_eq;
    int tau = 1;
    double T_s = 0.1;
    double T_s_zoh = 0.005;

    Index n() const { return A_bar.rows(); }
    Index m() const { return B_bar.cols(); }

    Vector step(const Vector& x, const Vector& u) const { return x_eq + A_bar * (x - x_eq) + B_bar * u + d_bar; }
};

struct CondensedPrediction {
    Matrix Phi;     ///< (nN) x n free response to x0 - x_eq
    Matrix Gamma;   ///< (nN) x (mN) forced response
    Vector offset;  ///< (nN) operating point plus accumulated drift
    int N = 1;

    Index n() const { return Phi.cols(); }

    /// Stacked [x_1; ...; x_N].
    Vector predict(const Vector& x0, const Vector& x_eq, const Vector& U) const
    {
        return Phi * (x0 - x_eq) + Gamma * U + offset;
    }
};

/// Central-difference Jacobian of f around (x, u) with per-component step 1e-6 max(|x_i|, scale_i).
inline std::pair<Matrix, Matrix> finite_difference_jacobian(const std::function<Vector(const Vector&, const Vector&)>& f,
                                                            const Vector& x, const Vector& u, const Vector& x_scale,
                                                            const Vector& u_scale, double rel_step = 1e-6)
{
    const Vector f0 = f(x, u);
    const Index n = x.size();
    const Index m = u.size();
    Matrix A(f0.size(), n);
    Matrix B(f0.size(), m);
    for (Index i = 0; i < n; ++i) {
        const double h = rel_step * std::max(std::abs(x(i)), x_scale(i));
        Vector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        const Vector diff = f(xp, u) - f(xm, u);
        if (!diff.allFinite()) throw NumericalError("jacobian: non-finite rhs at perturbed state");
        A.col(i) = diff / (xp(i) - xm(i));
    }
    for (Index j = 0; j < m; ++j) {
        const double h = rel_step * std::max(std::abs(u(j)), u_scale(j));
        Vector up = u, um = u;
        up(j) += h;
        um(j) -= h;
        const Vector diff = f(x, up) - f(x, um);
        if (!diff.allFinite()) throw NumericalError("jacobian: non-finite rhs at perturbed input");
        B.col(j) = diff / (up(j) - um(j));
    }
    return {A, B};
}

/// Typical magnitude of each plant state: 1e20 m^-3 for densities, 1 keV for temperatures.
inline Vector plant_state_scale(Index nodes)
{
    Vector s(2 * nodes);
    s << Vector::Constant(nodes, 1e20), Vector::Ones(nodes);
    return s;
}

/// Linearizes the plant at x_eq with one input: u = 1 means one nominal pellet source.
inline ContinuousLinearModel jacobian(const PlasmaModel& model, const PelletSpec& pellet, const Vector& x_eq,
                                      double u_eq = 0.0)
{
    require_dims(x_eq.size() == model.state_dim(), "jacobian: state length mismatch");
    const Vector source = pellet_source(pellet, model.grid, model.device);
    auto f = [&](const Vector& x, const Vector& u) { return rhs(x, source * u(0), model); };
    ContinuousLinearModel lin;
    lin.x_eq = x_eq;
    lin.u_eq = Vector::Constant(1, u_eq);
    lin.state_scale = plant_state_scale(model.nodes());
    auto [A, B] = finite_difference_jacobian(f, x_eq, lin.u_eq, lin.state_scale, Vector::Ones(1));
    lin.A_c = std::move(A);
    lin.B_c = std::move(B);
    lin.drift = f(x_eq, lin.u_eq);
    if (!lin.drift.allFinite()) throw NumericalError("jacobian: non-finite rhs at the operating point");
    return lin;
}

/// Exact hold discretization over T via one exponential of the augmented matrix [[A B c]; 0].
/// States are scaled internally by state_scale so the exponential sees an O(1) matrix.
inline ZohModel zoh_discretize(const ContinuousLinearModel& lin, double T)
{
    require(T > 0.0, "zoh_discretize: T must be positive");
    const Index n = lin.n();
    const Index m = lin.m();
    require_dims(lin.B_c.rows() == n && lin.A_c.cols() == n, "zoh_discretize: inconsistent model");
    const Vector scale = lin.state_scale.size() == n ? lin.state_scale : Vector::Ones(n);
    const Vector drift = lin.drift.size() == n ? lin.drift : Vector::Zero(n);
    const Vector inv = scale.cwiseInverse();

    Matrix M = Matrix::Zero(n + m + 1, n + m + 1);
    M.topLeftCorner(n, n) = inv.asDiagonal() * lin.A_c * scale.asDiagonal();
    M.block(0, n, n, m) = inv.asDiagonal() * lin.B_c;
    M.block(0, n + m, n, 1) = inv.cwiseProduct(drift);
    const Matrix E = (M * T).exp();
    if (!E.allFinite()) throw NumericalError("zoh_discretize: non-finite matrix exponential");

    ZohModel z;
    z.A = scale.asDiagonal() * E.topLeftCorner(n, n) * inv.asDiagonal();
    z.B = scale.asDiagonal() * E.block(0, n, n, m);
    z.d = scale.asDiagonal() * E.block(0, n + m, n, 1);
    return z;
}

/// A_bar = A^tau, B_bar = A^(tau-1) B, d_bar = sum_{k<tau} A^k d.
inline ExtendedLtiModel extend(const ZohModel& z, int tau)
{
    require(tau >= 1, "extend: tau must be at least 1");
    const Index n = z.A.rows();
    ExtendedLtiModel e;
    Matrix power = Matrix::Identity(n, n);
    Vector acc = Vector::Zero(n);
    const Vector d = z.d.size() == n ? z.d : Vector::Zero(n);
    for (int k = 0; k < tau - 1; ++k) {
        acc += power * d;
        power = z.A * power;
    }
    e.B_bar = power * z.B;
    acc += power * d;
    e.A_bar = z.A * power;
    e.d_bar = acc;
    e.x_eq = Vector::Zero(n);
    e.tau = tau;
    return e;
}

inline ExtendedLtiModel extend(const Matrix& A, const Matrix& B, int tau)
{
    return extend(ZohModel{A, B, Vector::Zero(A.rows())}, tau);
}

/// Full chain: linearize, hold for T_s_zoh, free evolution for the rest of T_s.
inline ExtendedLtiModel build_extended_model(const ContinuousLinearModel& lin, double T_s, double T_s_zoh,
                                             bool include_drift = true)
{
    const int tau = substeps_per_interval(T_s, T_s_zoh);
    ContinuousLinearModel l = lin;
    if (!include_drift) l.drift = Vector::Zero(lin.n());
    ExtendedLtiModel e = extend(zoh_discretize(l, T_s_zoh), tau);
    e.x_eq = lin.x_eq;
    e.T_s = T_s;
    e.T_s_zoh = T_s_zoh;
    return e;
}

inline CondensedPrediction condense(const ExtendedLtiModel& model, int N)
{
    require(N >= 1, "condense: N must be at least 1");
    const Index n = model.n();
    const Index m = model.m();
    CondensedPrediction c;
    c.N = N;
    c.Phi.resize(n * N, n);
    c.Gamma = Matrix::Zero(n * N, m * N);
    c.offset.resize(n * N);

    const Vector x_eq = model.x_eq.size() == n ? model.x_eq : Vector::Zero(n);
    const Vector d = model.d_bar.size() == n ? model.d_bar : Vector::Zero(n);
    std::vector<Matrix> powers_times_B;
    powers_times_B.reserve(static_cast<std::size_t>(N));
    Matrix power = model.A_bar;
    Matrix AkB = model.B_bar;
    Vector drift = d;
    for (int k = 0; k < N; ++k) {
        c.Phi.middleRows(k * n, n) = power;
        c.offset.segment(k * n, n) = x_eq + drift;
        powers_times_B.push_back(AkB);
        power = model.A_bar * power;
        AkB = model.A_bar * AkB;
        drift = model.A_bar * drift + d;
    }
    for (int k = 0; k < N; ++k)
        for (int j = 0; j <= k; ++j)
            c.Gamma.block(k * n, j * m, n, m) = powers_times_B[static_cast<std::size_t>(k - j)];
    return c;
}

}  // namespace pelletmpc
