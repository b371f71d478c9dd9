#pragma once

#include "pelletmpc/mi_mpc.hpp"
#include "pelletmpc/ocp.hpp"
#include "pelletmpc/plasma_model.hpp"
#include "pelletmpc/pth_mpc.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pelletmpc {

enum class ControllerKind { mi, pth, relay };

inline std::string to_string(ControllerKind k)
{
    switch (k) {
    case ControllerKind::mi: return "mi";
    case ControllerKind::pth: return "pth";
    case ControllerKind::relay: return "relay";
    }
    return "unknown";
}

inline ControllerKind parse_controller(const std::string& s)
{
    if (s == "mi") return ControllerKind::mi;
    if (s == "pth") return ControllerKind::pth;
    if (s == "relay") return ControllerKind::relay;
    throw InvalidArgument("unknown controller '" + s + "' (expected mi, pth or relay)");
}

enum class InitialProfile { equilibrium, parabolic };

struct ScheduleOverrides {
    std::optional<double> beta_init;
    std::optional<double> beta_inc;
    std::optional<double> gamma_init;
    std::optional<double> gamma_inc;
    std::optional<double> epsilon;
    std::optional<int> j_max;

    PthSchedule apply(int N) const
    {
        PthSchedule s = PthSchedule::for_horizon(N);
        if (beta_init) s.beta_init = *beta_init;
        if (beta_inc) s.beta_inc = *beta_inc;
        if (gamma_init) s.gamma_init = *gamma_init;
        if (gamma_inc) s.gamma_inc = *gamma_inc;
        if (epsilon) s.epsilon = *epsilon;
        if (j_max) s.j_max = *j_max;
        s.validate();
        return s;
    }
};

struct ScenarioConfig {
    DeviceParams device;
    TransportCoefficients transport;
    std::vector<double> grid_nodes{0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.7, 1.8, 1.9, 2.0};
    PelletSpec pellet;
    int horizon = 5;
    ControllerKind controller = ControllerKind::mi;
    ScheduleOverrides schedule;
    BnbConfig bnb;
    double T_s = 0.1;
    double T_s_zoh = 0.005;
    double t_start = 0.0;
    double t_end = 10.0;
    ReferenceSignal reference;
    InitialProfile initial_profile = InitialProfile::equilibrium;
    double initial_line_average = 1e20;
    double initial_T_core = 15.0;
    double constraint_radius = 1.8;
    double weight_scale = 100.0;
    bool include_drift = true;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    PlasmaModel plasma_model() const
    {
        Vector nodes = Eigen::Map<const Vector>(grid_nodes.data(), static_cast<Index>(grid_nodes.size()));
        return {RadialGrid(nodes, device.a + device.lambda), transport, device};
    }

    void validate() const
    {
        device.validate();
        transport.validate();
        reference.validate();
        require(horizon >= 1, "horizon must be at least 1");
        require(t_end >= t_start, "t_sim must satisfy start <= end");
        require(weight_scale > 0.0, "weight_scale must be positive");
        require(initial_line_average > 0.0, "initial_line_average must be positive");
        require(pellet.atoms > 0.0, "pellet atoms must be positive");
        substeps_per_interval(T_s, T_s_zoh);
        require(!grid_nodes.empty() && std::abs(grid_nodes.back() - device.a) < 1e-9,
                "grid must end at the minor radius");
        const PlasmaModel pm = plasma_model();
        pm.grid.index_of(pellet.deposit_radius);
        pm.grid.index_of(constraint_radius);
        if (controller == ControllerKind::pth) schedule.apply(horizon);
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw InvalidArgument("config: unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, std::optional<T>& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ScenarioConfig scenario_from_json(const nlohmann::json& j)
{
    using detail::read_if;
    detail::reject_unknown(j,
                           {"device", "transport", "grid", "pellet", "horizon", "controller", "schedule", "bnb",
                            "T_s", "T_s_zoh", "t_sim", "reference", "initial_profile", "initial_line_average",
                            "initial_T_core", "constraint_radius", "weight_scale", "include_drift", "seed", "output_dir"},
                           "top level");
    ScenarioConfig c;
    if (j.contains("device")) {
        const auto& d = j.at("device");
        detail::reject_unknown(d, {"a", "R0", "I_p", "lambda"}, "device");
        read_if(d, "a", c.device.a);
        read_if(d, "R0", c.device.R0);
        read_if(d, "I_p", c.device.I_p);
        read_if(d, "lambda", c.device.lambda);
    }
    if (j.contains("transport")) {
        const auto& t = j.at("transport");
        detail::reject_unknown(t,
                               {"D_n", "nu", "chi", "eta_scale", "mu0", "S_Te", "edge_D_n", "edge_radius",
                                "poloidal_drift", "thermodiffusion", "T_floor", "n_floor", "B_p_profile"},
                               "transport");
        auto& tr = c.transport;
        read_if(t, "D_n", tr.D_n);
        read_if(t, "nu", tr.nu);
        read_if(t, "chi", tr.chi);
        read_if(t, "eta_scale", tr.eta_scale);
        read_if(t, "mu0", tr.mu0);
        read_if(t, "S_Te", tr.S_Te);
        read_if(t, "edge_D_n", tr.edge_D_n);
        read_if(t, "edge_radius", tr.edge_radius);
        read_if(t, "poloidal_drift", tr.poloidal_drift);
        read_if(t, "thermodiffusion", tr.thermodiffusion);
        read_if(t, "T_floor", tr.T_floor);
        read_if(t, "n_floor", tr.n_floor);
        if (t.contains("B_p_profile")) {
            const auto v = t.at("B_p_profile").get<std::vector<double>>();
            tr.B_p_profile = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
        }
    }
    if (j.contains("grid")) {
        detail::reject_unknown(j.at("grid"), {"nodes"}, "grid");
        read_if(j.at("grid"), "nodes", c.grid_nodes);
    }
    if (j.contains("pellet")) {
        const auto& p = j.at("pellet");
        detail::reject_unknown(p, {"atoms", "deposit_radius", "ablation_duration"}, "pellet");
        read_if(p, "atoms", c.pellet.atoms);
        read_if(p, "deposit_radius", c.pellet.deposit_radius);
        read_if(p, "ablation_duration", c.pellet.ablation_duration);
    }
    read_if(j, "horizon", c.horizon);
    if (j.contains("controller")) c.controller = parse_controller(j.at("controller").get<std::string>());
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        detail::reject_unknown(s, {"beta_init", "beta_inc", "gamma_init", "gamma_inc", "epsilon", "j_max"},
                               "schedule");
        read_if(s, "beta_init", c.schedule.beta_init);
        read_if(s, "beta_inc", c.schedule.beta_inc);
        read_if(s, "gamma_init", c.schedule.gamma_init);
        read_if(s, "gamma_inc", c.schedule.gamma_inc);
        read_if(s, "epsilon", c.schedule.epsilon);
        read_if(s, "j_max", c.schedule.j_max);
    }
    if (j.contains("bnb")) {
        const auto& b = j.at("bnb");
        detail::reject_unknown(b, {"abs_gap", "rel_gap", "max_nodes"}, "bnb");
        read_if(b, "abs_gap", c.bnb.abs_gap);
        read_if(b, "rel_gap", c.bnb.rel_gap);
        read_if(b, "max_nodes", c.bnb.max_nodes);
    }
    read_if(j, "T_s", c.T_s);
    read_if(j, "T_s_zoh", c.T_s_zoh);
    if (j.contains("t_sim")) {
        const auto span = j.at("t_sim").get<std::vector<double>>();
        require(span.size() == 2, "config: t_sim must be [start, end]");
        c.t_start = span[0];
        c.t_end = span[1];
    }
    if (j.contains("reference")) {
        const auto& r = j.at("reference");
        detail::reject_unknown(r, {"breakpoints", "levels"}, "reference");
        read_if(r, "breakpoints", c.reference.breakpoints);
        read_if(r, "levels", c.reference.levels);
    }
    if (j.contains("initial_profile")) {
        const auto s = j.at("initial_profile").get<std::string>();
        if (s == "equilibrium")
            c.initial_profile = InitialProfile::equilibrium;
        else if (s == "parabolic")
            c.initial_profile = InitialProfile::parabolic;
        else
            throw InvalidArgument("config: initial_profile must be 'equilibrium' or 'parabolic'");
    }
    read_if(j, "initial_line_average", c.initial_line_average);
    read_if(j, "initial_T_core", c.initial_T_core);
    read_if(j, "constraint_radius", c.constraint_radius);
    read_if(j, "weight_scale", c.weight_scale);
    read_if(j, "include_drift", c.include_drift);
    read_if(j, "seed", c.seed);
    read_if(j, "output_dir", c.output_dir);
    c.validate();
    return c;
}

inline ScenarioConfig load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument("config " + path + ": " + e.what());
    }
    try {
        return scenario_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("config " + path + ": " + e.what());
    }
}

inline nlohmann::json to_json(const ScenarioConfig& c)
{
    nlohmann::json j;
    j["device"] = {{"a", c.device.a}, {"R0", c.device.R0}, {"I_p", c.device.I_p}, {"lambda", c.device.lambda}};
    const auto& t = c.transport;
    j["transport"] = {{"D_n", t.D_n},
                      {"nu", t.nu},
                      {"chi", t.chi},
                      {"eta_scale", t.eta_scale},
                      {"mu0", t.mu0},
                      {"S_Te", t.S_Te},
                      {"edge_D_n", t.edge_D_n},
                      {"edge_radius", t.edge_radius},
                      {"poloidal_drift", t.poloidal_drift},
                      {"thermodiffusion", t.thermodiffusion},
                      {"T_floor", t.T_floor},
                      {"n_floor", t.n_floor}};
    if (t.B_p_profile.size() > 0)
        j["transport"]["B_p_profile"] = std::vector<double>(t.B_p_profile.data(), t.B_p_profile.data() + t.B_p_profile.size());
    j["grid"] = {{"nodes", c.grid_nodes}};
    j["pellet"] = {{"atoms", c.pellet.atoms},
                   {"deposit_radius", c.pellet.deposit_radius},
                   {"ablation_duration", c.pellet.ablation_duration}};
    j["horizon"] = c.horizon;
    j["controller"] = to_string(c.controller);
    const PthSchedule s = c.schedule.apply(c.horizon);
    j["schedule"] = {{"beta_init", s.beta_init}, {"beta_inc", s.beta_inc}, {"gamma_init", s.gamma_init},
                     {"gamma_inc", s.gamma_inc}, {"epsilon", s.epsilon},     {"j_max", s.j_max}};
    j["bnb"] = {{"abs_gap", c.bnb.abs_gap}, {"rel_gap", c.bnb.rel_gap}, {"max_nodes", c.bnb.max_nodes}};
    j["T_s"] = c.T_s;
    j["T_s_zoh"] = c.T_s_zoh;
    j["t_sim"] = {c.t_start, c.t_end};
    j["reference"] = {{"breakpoints", c.reference.breakpoints}, {"levels", c.reference.levels}};
    j["initial_profile"] = c.initial_profile == InitialProfile::equilibrium ? "equilibrium" : "parabolic";
    j["initial_line_average"] = c.initial_line_average;
    j["initial_T_core"] = c.initial_T_core;
    j["constraint_radius"] = c.constraint_radius;
    j["weight_scale"] = c.weight_scale;
    j["include_drift"] = c.include_drift;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    return j;
}

}  // namespace pelletmpc
