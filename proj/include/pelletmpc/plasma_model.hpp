#pragma once

// Cylindrical 1D density/temperature transport plant.
//
// State layout: x = [n_e(r_0..r_{m-1}), T_e(r_0..r_{m-1})], densities in m^-3,
// temperatures in keV. Fluxes live on cell faces halfway between nodes; the
// last face sits halfway between r = a and the virtual edge a + lambda, where
// both fields are held at zero.

#include "pelletmpc/types.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace pelletmpc {

struct DeviceParams {
    double a = 2.0;        ///< minor radius [m]
    double R0 = 6.2;       ///< major radius [m]
    double I_p = 15.0;     ///< plasma current [MA]
    double lambda = 0.05;  ///< scrape-off width [m]

    void validate() const
    {
        require(a > 0.0, "DeviceParams: a must be positive");
        require(R0 > a, "DeviceParams: R0 must exceed a");
        require(I_p > 0.0, "DeviceParams: I_p must be positive");
        require(lambda > 0.0, "DeviceParams: lambda must be positive");
    }
};

class RadialGrid {
public:
    RadialGrid() = default;

    RadialGrid(Vector nodes, double virtual_edge) : nodes_(std::move(nodes)), virtual_edge_(virtual_edge)
    {
        const Index m = nodes_.size();
        require(m >= 2, "RadialGrid: need at least two nodes");
        require(nodes_(0) == 0.0, "RadialGrid: first node must be the axis r = 0");
        for (Index i = 1; i < m; ++i)
            require(nodes_(i) > nodes_(i - 1), "RadialGrid: nodes must be strictly increasing");
        require(virtual_edge_ > nodes_(m - 1), "RadialGrid: virtual edge must lie outside the last node");

        outer_face_.resize(m);
        inner_face_.resize(m);
        spacing_.resize(m);
        volume_.resize(m);
        for (Index i = 0; i < m; ++i) {
            const double next = i + 1 < m ? nodes_(i + 1) : virtual_edge_;
            outer_face_(i) = 0.5 * (nodes_(i) + next);
            inner_face_(i) = i == 0 ? 0.0 : outer_face_(i - 1);
            spacing_(i) = next - nodes_(i);
            volume_(i) = 0.5 * (outer_face_(i) * outer_face_(i) - inner_face_(i) * inner_face_(i));
        }
    }

    /// 13-node grid {0, 0.2, ..., 1.6, 1.7, 1.8, 1.9, 2.0} scaled to the device radius.
    static RadialGrid standard(const DeviceParams& dev)
    {
        dev.validate();
        Vector r(13);
        r << 0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.7, 1.8, 1.9, 2.0;
        r *= dev.a / 2.0;
        return RadialGrid(r, dev.a + dev.lambda);
    }

    Index size() const { return nodes_.size(); }
    Index state_dim() const { return 2 * nodes_.size(); }
    const Vector& nodes() const { return nodes_; }
    double node(Index i) const { return nodes_(i); }
    double virtual_edge() const { return virtual_edge_; }
    double minor_radius() const { return nodes_(nodes_.size() - 1); }

    /// Distance from node i to the next node (or to the virtual edge).
    const Vector& spacings() const { return spacing_; }
    const Vector& outer_faces() const { return outer_face_; }
    const Vector& inner_faces() const { return inner_face_; }
    /// Radial extent of the control volume around each node.
    Vector widths() const { return outer_face_ - inner_face_; }
    /// Cross-section weight int r dr over each control volume.
    const Vector& volumes() const { return volume_; }

    Index index_of(double r, double tol = 1e-9) const
    {
        for (Index i = 0; i < nodes_.size(); ++i)
            if (std::abs(nodes_(i) - r) <= tol) return i;
        throw InvalidArgument("RadialGrid: radius " + std::to_string(r) + " is not a grid node");
    }

private:
    Vector nodes_;
    double virtual_edge_ = 0.0;
    Vector outer_face_;
    Vector inner_face_;
    Vector spacing_;
    Vector volume_;
};

struct TransportCoefficients {
    double D_n = 1.0;          ///< particle diffusivity [m^2/s]
    double nu = 0.0;           ///< inward pinch velocity [m/s]
    double chi = 2.0;          ///< thermal diffusivity [m^2/s]
    double eta_scale = 1.65e-9;///< Spitzer resistivity at 1 keV [Ohm m]
    double mu0 = 4e-7 * std::numbers::pi;
    double S_Te = 1.2e21;      ///< uniform heating term [keV m^-3 / s]
    /// Diffusivity applied on faces outside edge_radius; non-positive keeps D_n everywhere.
    double edge_D_n = 0.08;
    double edge_radius = 1.7;
    bool poloidal_drift = true;
    bool thermodiffusion = true;
    double T_floor = 0.01;     ///< keV, used wherever T_e divides
    double n_floor = 1e17;     ///< m^-3, used in the temperature equation divisor
    Vector B_p_profile;        ///< poloidal field per node [T]; empty selects the uniform-current profile

    void validate() const
    {
        require(D_n > 0.0, "TransportCoefficients: D_n must be positive");
        require(chi > 0.0, "TransportCoefficients: chi must be positive");
        require(eta_scale > 0.0, "TransportCoefficients: eta_scale must be positive");
        require(mu0 > 0.0, "TransportCoefficients: mu0 must be positive");
        require(T_floor > 0.0 && n_floor > 0.0, "TransportCoefficients: floors must be positive");
        require(std::isfinite(nu) && std::isfinite(S_Te), "TransportCoefficients: non-finite value");
        if (B_p_profile.size() > 0)
            require(B_p_profile.allFinite(), "TransportCoefficients: B_p profile must be finite");
    }

    double diffusivity_at(double face_radius) const
    {
        return edge_D_n > 0.0 && face_radius > edge_radius ? edge_D_n : D_n;
    }

    /// Everything switched off: no diffusion, pinch, conduction, heating or drift.
    static TransportCoefficients inert()
    {
        TransportCoefficients c;
        c.D_n = 0.0;
        c.edge_D_n = 0.0;
        c.nu = 0.0;
        c.chi = 0.0;
        c.S_Te = 0.0;
        c.poloidal_drift = false;
        return c;
    }
};

/// Spitzer-like parallel resistivity with the temperature floored.
inline double spitzer_resistivity(double T_keV, double eta_scale, double T_floor)
{
    const double T = std::max(T_keV, T_floor);
    return eta_scale * std::pow(T, -1.5);
}

/// B_p(r) = mu0 I_p r / (2 pi a^2) of a uniform current column.
inline Vector uniform_current_poloidal_field(const RadialGrid& grid, const DeviceParams& dev, double mu0)
{
    const double slope = mu0 * dev.I_p * 1e6 / (2.0 * std::numbers::pi * dev.a * dev.a);
    return slope * grid.nodes();
}

struct PlasmaProfileState {
    Vector n_e;
    Vector T_e;

    Vector stacked() const
    {
        Vector x(n_e.size() + T_e.size());
        x << n_e, T_e;
        return x;
    }

    static PlasmaProfileState from_stacked(const Vector& x)
    {
        require_dims(x.size() % 2 == 0, "PlasmaProfileState: stacked vector must have even length");
        const Index m = x.size() / 2;
        return {x.head(m), x.tail(m)};
    }
};

struct PelletSpec {
    double atoms = 6e21;
    double deposit_radius = 1.7;      ///< [m], must be a grid node
    double ablation_duration = 0.005; ///< [s]
};

/// Plant description bundled for convenience; all members are plain values.
struct PlasmaModel {
    RadialGrid grid;
    TransportCoefficients coeffs;
    DeviceParams device;

    static PlasmaModel standard(TransportCoefficients coeffs = {}, DeviceParams dev = {})
    {
        return {RadialGrid::standard(dev), std::move(coeffs), dev};
    }

    Index nodes() const { return grid.size(); }
    Index state_dim() const { return grid.state_dim(); }
};

namespace detail {

struct FaceFields {
    Vector B_p;   ///< field at each outer face
    Vector dB_p;  ///< radial derivative at each outer face
};

inline FaceFields poloidal_field_on_faces(const RadialGrid& grid, const TransportCoefficients& c,
                                          const DeviceParams& dev)
{
    const Index m = grid.size();
    const Vector Bn = c.B_p_profile.size() > 0 ? c.B_p_profile : uniform_current_poloidal_field(grid, dev, c.mu0);
    require_dims(Bn.size() == m, "B_p profile length must equal the node count");
    FaceFields f{Vector(m), Vector(m)};
    for (Index i = 0; i < m; ++i) {
        const Index lo = i + 1 < m ? i : m - 2;
        const double slope = (Bn(lo + 1) - Bn(lo)) / (grid.node(lo + 1) - grid.node(lo));
        f.dB_p(i) = slope;
        f.B_p(i) = Bn(lo) + slope * (grid.outer_faces()(i) - grid.node(lo));
    }
    return f;
}

}  // namespace detail

/// Face flux F_i (positive outward is a gain for node i) at every outer face.
/// dn_i/dt = (f_i F_i - f_{i-1} F_{i-1}) / V_i + S_i with F_{-1} = 0 at the axis.
inline Vector particle_face_flux(const Vector& x, const PlasmaModel& model)
{
    const RadialGrid& grid = model.grid;
    const TransportCoefficients& c = model.coeffs;
    const Index m = grid.size();
    const auto n = x.head(m);
    const auto T = x.tail(m);
    const detail::FaceFields bp = c.poloidal_drift ? detail::poloidal_field_on_faces(grid, c, model.device)
                                                   : detail::FaceFields{};
    Vector F(m);
    for (Index i = 0; i < m; ++i) {
        const double n_next = i + 1 < m ? n(i + 1) : 0.0;
        const double T_next = i + 1 < m ? T(i + 1) : 0.0;
        const double h = grid.spacings()(i);
        const double face = grid.outer_faces()(i);
        const double T_face = std::max(0.5 * (T(i) + T_next), c.T_floor);
        const double n_face = 0.5 * (n(i) + n_next);
        const double D = c.diffusivity_at(face);
        double grad = (n_next - n(i)) / h;
        if (c.thermodiffusion) grad += n_face / T_face * (T_next - T(i)) / h;
        if (c.poloidal_drift) {
            const double eta = spitzer_resistivity(T_face, c.eta_scale, c.T_floor);
            const double D_B = eta / c.mu0;
            grad += D_B / (4.0 * eta) * bp.B_p(i) / (T_face * face) * (bp.B_p(i) + face * bp.dB_p(i));
        }
        const double upwind = c.nu >= 0.0 ? n_next : n(i);
        F(i) = D * grad + c.nu * upwind;
    }
    return F;
}

/// Time derivative of the stacked state. source_n holds the density source per node [m^-3/s].
inline Vector rhs(const Vector& x, const Vector& source_n, const PlasmaModel& model)
{
    const RadialGrid& grid = model.grid;
    const TransportCoefficients& c = model.coeffs;
    const Index m = grid.size();
    require_dims(x.size() == 2 * m, "rhs: state length must be twice the node count");
    require_dims(source_n.size() == m, "rhs: source length must equal the node count");
    if (!x.allFinite() || !source_n.allFinite()) throw NumericalError("rhs: non-finite input");

    const auto n = x.head(m);
    const auto T = x.tail(m);
    const Vector& f = grid.outer_faces();
    const Vector& V = grid.volumes();

    const Vector F = particle_face_flux(x, model);
    Vector dx(2 * m);
    double inner_particles = 0.0;
    double inner_heat = 0.0;
    for (Index i = 0; i < m; ++i) {
        const double outer_particles = f(i) * F(i);
        dx(i) = (outer_particles - inner_particles) / V(i) + source_n(i);
        inner_particles = outer_particles;

        const double n_next = i + 1 < m ? n(i + 1) : 0.0;
        const double T_next = i + 1 < m ? T(i + 1) : 0.0;
        const double outer_heat = f(i) * 0.5 * (n(i) + n_next) * c.chi * (T_next - T(i)) / grid.spacings()(i);
        const double divisor = 3.0 * std::max(n(i), c.n_floor);
        dx(m + i) = ((outer_heat - inner_heat) / V(i) + c.S_Te) / divisor;
        inner_heat = outer_heat;
    }
    return dx;
}

inline Vector rhs(const PlasmaProfileState& s, const Vector& source_n, const PlasmaModel& model)
{
    return rhs(s.stacked(), source_n, model);
}

/// Particle flow through the last face, f_edge * F_edge (negative means loss).
inline double edge_particle_flow(const Vector& x, const PlasmaModel& model)
{
    const Vector F = particle_face_flux(x, model);
    return model.grid.outer_faces()(F.size() - 1) * F(F.size() - 1);
}

/// Converts the per-node cross-section weight into a physical torus volume [m^3].
inline double shell_volume_factor(const DeviceParams& dev)
{
    return 4.0 * std::numbers::pi * std::numbers::pi * dev.R0;
}

/// Constant-rate source at the deposit node that delivers exactly `atoms` over the ablation time.
inline Vector pellet_source(const PelletSpec& pellet, const RadialGrid& grid, const DeviceParams& dev)
{
    require(pellet.atoms >= 0.0, "pellet_source: atoms must be non-negative");
    require(pellet.ablation_duration > 0.0, "pellet_source: ablation duration must be positive");
    const Index k = grid.index_of(pellet.deposit_radius);
    Vector S = Vector::Zero(grid.size());
    S(k) = pellet.atoms / (shell_volume_factor(dev) * grid.volumes()(k) * pellet.ablation_duration);
    return S;
}

inline Vector rk4_step(const Vector& x, const Vector& source_n, double dt, const PlasmaModel& model)
{
    require(dt > 0.0, "rk4_step: dt must be positive");
    const Vector k1 = rhs(x, source_n, model);
    const Vector x2 = x + 0.5 * dt * k1;
    if (!x2.allFinite()) throw NumericalError("rk4_step: non-finite stage (unstable step?)");
    const Vector k2 = rhs(x2, source_n, model);
    const Vector x3 = x + 0.5 * dt * k2;
    if (!x3.allFinite()) throw NumericalError("rk4_step: non-finite stage (unstable step?)");
    const Vector k3 = rhs(x3, source_n, model);
    const Vector x4 = x + dt * k3;
    if (!x4.allFinite()) throw NumericalError("rk4_step: non-finite stage (unstable step?)");
    const Vector k4 = rhs(x4, source_n, model);
    Vector out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!out.allFinite()) throw NumericalError("rk4_step: non-finite result (unstable step?)");
    return out;
}

inline int substeps_per_interval(double T_s, double T_s_zoh)
{
    require(T_s_zoh > 0.0 && T_s > 0.0, "control interval lengths must be positive");
    const double ratio = T_s / T_s_zoh;
    const long rounded = std::lround(ratio);
    require(rounded >= 1 && std::abs(ratio - static_cast<double>(rounded)) < 1e-9 * ratio,
            "T_s must be an integer multiple of T_s_zoh");
    return static_cast<int>(rounded);
}

struct NoSubstepObserver {
    void operator()(int, const Vector&) const {}
};

/// Advance one control interval: pellet source (if fired) during the first substep, then free evolution.
/// The observer is called after each substep with (substep index, state).
template <class Observer = NoSubstepObserver>
Vector simulate_control_interval(const Vector& x, bool fire, const PelletSpec& pellet, const PlasmaModel& model,
                                 double T_s, double T_s_zoh, Observer&& observe = Observer{})
{
    const int tau = substeps_per_interval(T_s, T_s_zoh);
    const Vector zero = Vector::Zero(model.nodes());
    const Vector source = fire ? pellet_source(pellet, model.grid, model.device) : zero;
    Vector state = x;
    for (int s = 0; s < tau; ++s) {
        state = rk4_step(state, s == 0 ? source : zero, T_s_zoh, model);
        observe(s, state);
    }
    return state;
}

/// n(r) = n0 (1 - r^2/r_v^2) scaled to the requested line average, T(r) = T_core (1 - r^2/r_v^2).
inline Vector parabolic_profile(const RadialGrid& grid, double line_average, double T_core)
{
    const Index m = grid.size();
    const double rv = grid.virtual_edge();
    Vector shape(m);
    for (Index i = 0; i < m; ++i) shape(i) = 1.0 - grid.node(i) * grid.node(i) / (rv * rv);
    double integral = 0.0;
    for (Index i = 0; i + 1 < m; ++i)
        integral += 0.5 * (shape(i) + shape(i + 1)) * (grid.node(i + 1) - grid.node(i));
    const double avg = integral / grid.minor_radius();
    Vector x(2 * m);
    x << shape * (line_average / avg), shape * T_core;
    return x;
}

}  // namespace pelletmpc
