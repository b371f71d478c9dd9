#pragma once

#include "pelletmpc/harness.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace pelletmpc {

namespace detail {

inline std::string format_number(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::string radius_label(double r)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", r);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

inline std::string trace_header(const Vector& node_radii)
{
    std::string h = "t_s,u,cpu_ms,objective,nbar_e,n_edge";
    for (Index i = 0; i < node_radii.size(); ++i) h += ",n_e_r" + detail::radius_label(node_radii(i));
    for (Index i = 0; i < node_radii.size(); ++i) h += ",T_e_r" + detail::radius_label(node_radii(i));
    return h;
}

inline void write_trace_csv(std::ostream& out, const ClosedLoopTrace& trace)
{
    out << trace_header(trace.node_radii) << '\n';
    for (const TraceRow& r : trace.rows) {
        out << detail::format_number(r.t) << ',';
        if (r.u) out << *r.u;
        out << ',';
        if (r.cpu_ms) out << detail::format_number(*r.cpu_ms);
        out << ',';
        if (r.objective) out << detail::format_number(*r.objective);
        out << ',' << detail::format_number(r.nbar) << ',' << detail::format_number(r.n_edge);
        for (Index i = 0; i < r.x.size(); ++i) out << ',' << detail::format_number(r.x(i));
        out << '\n';
    }
}

/// Reads rows back; node radii are not recoverable from labels and are left empty.
inline std::vector<TraceRow> read_trace_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument("trace: missing header");
    const auto header = detail::split_csv_line(line);
    if (header.size() < 6 || header[0] != "t_s" || header[5] != "n_edge")
        throw InvalidArgument("trace: unexpected header");
    const std::size_t states = header.size() - 6;
    std::vector<TraceRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) throw InvalidArgument("trace: row has wrong number of columns");
        TraceRow r;
        r.t = std::stod(cells[0]);
        if (!cells[1].empty()) r.u = std::stoi(cells[1]);
        if (!cells[2].empty()) r.cpu_ms = std::stod(cells[2]);
        if (!cells[3].empty()) r.objective = std::stod(cells[3]);
        r.nbar = std::stod(cells[4]);
        r.n_edge = std::stod(cells[5]);
        r.x.resize(static_cast<Index>(states));
        for (std::size_t i = 0; i < states; ++i) r.x(static_cast<Index>(i)) = std::stod(cells[6 + i]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline void write_steps_csv(std::ostream& out, const ClosedLoopTrace& trace)
{
    out << "t_s,u,cpu_ms,objective,status,fallback,nodes,qp_iterations,homotopy_iterations,inner_iterations,converged\n";
    for (const StepRecord& s : trace.steps) {
        const ControlDecision& d = s.decision;
        out << detail::format_number(s.t) << ',' << d.u0 << ',' << detail::format_number(s.cpu_ms) << ',';
        if (std::isfinite(d.objective)) out << detail::format_number(d.objective);
        out << ',' << d.status << ',' << (d.fallback ? 1 : 0) << ',' << d.nodes << ',' << d.qp_iterations << ','
            << d.homotopy_iterations << ',' << d.inner_iterations << ',' << (d.converged ? 1 : 0) << '\n';
    }
}

inline nlohmann::json summary_json(const ScenarioConfig& cfg, const ClosedLoopTrace& trace, const MetricsReport& m)
{
    nlohmann::json j;
    j["version"] = version_string;
    j["metrics"] = to_json(m);
    j["config"] = to_json(cfg);
    j["greenwald_limit"] = trace.limit;
    j["aborted"] = trace.aborted;
    if (trace.aborted) j["abort_reason"] = trace.abort_reason;
    return j;
}

inline void write_run_outputs(const std::filesystem::path& dir, const ScenarioConfig& cfg,
                              const ClosedLoopTrace& trace, const MetricsReport& m)
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "trace.csv");
        write_trace_csv(f, trace);
    }
    {
        std::ofstream f(dir / "steps.csv");
        write_steps_csv(f, trace);
    }
    std::ofstream f(dir / "summary.json");
    f << std::setw(2) << summary_json(cfg, trace, m) << '\n';
}

}  // namespace pelletmpc
