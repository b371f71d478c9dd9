#include "pelletmpc/harness.hpp"
#include "pelletmpc/trace_io.hpp"
#include "pelletmpc/verify.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace pelletmpc;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string controller;
    int horizon = 0;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

ScenarioConfig resolve(const CommonOptions& o)
{
    ScenarioConfig cfg = o.config_path.empty() ? ScenarioConfig{} : load_scenario(o.config_path);
    if (!o.controller.empty()) cfg.controller = parse_controller(o.controller);
    if (o.horizon > 0) cfg.horizon = o.horizon;
    if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    return cfg;
}

void print_metrics(const std::string& label, const MetricsReport& m)
{
    std::printf("%-10s reach %6.2f%%  unreach %6.2f%%  viol %d  max_edge %.4f  pellets %3d  cpu max %8.3f ms  mean %7.3f ms"
                "  fallbacks %d\n",
                label.c_str(), m.reachable_error_pct, m.unreachable_error_pct, m.violations, m.max_substep_ratio,
                m.pellets, m.cpu_max_ms, m.cpu_mean_ms, m.fallbacks);
}

int cmd_run(const CommonOptions& o)
{
    const ScenarioConfig cfg = resolve(o);
    const ScenarioModels models(cfg);
    auto ctrl = make_controller(cfg, models);
    const ClosedLoopTrace trace = run_closed_loop(cfg, models, *ctrl);
    const MetricsReport m = compute_metrics(trace, cfg.reference);
    write_run_outputs(cfg.output_dir, cfg, trace, m);
    print_metrics(to_string(cfg.controller) + " N=" + std::to_string(cfg.horizon), m);
    if (trace.aborted) {
        std::fprintf(stderr, "run aborted: %s\n", trace.abort_reason.c_str());
        return 2;
    }
    return 0;
}

int cmd_sweep(const CommonOptions& o)
{
    const ScenarioConfig base = resolve(o);
    const ScenarioModels models(base);
    const std::filesystem::path root = base.output_dir;
    std::filesystem::create_directories(root);
    std::ofstream table(root / "sweep.csv");
    table << "controller,N,reachable_error_pct,unreachable_error_pct,violations,max_substep_ratio,pellets,cpu_max_ms,"
             "cpu_mean_ms,fallbacks\n";
    auto one = [&](ControllerKind kind, int N) {
        ScenarioConfig cfg = base;
        cfg.controller = kind;
        cfg.horizon = N;
        auto ctrl = make_controller(cfg, models);
        const ClosedLoopTrace trace = run_closed_loop(cfg, models, *ctrl);
        const MetricsReport m = compute_metrics(trace, cfg.reference);
        const std::string tag = kind == ControllerKind::relay ? "relay" : to_string(kind) + "_N" + std::to_string(N);
        cfg.output_dir = (root / tag).string();
        write_run_outputs(cfg.output_dir, cfg, trace, m);
        print_metrics(tag, m);
        table << to_string(kind) << ',' << N << ',' << m.reachable_error_pct << ',' << m.unreachable_error_pct << ','
              << m.violations << ',' << m.max_substep_ratio << ',' << m.pellets << ',' << m.cpu_max_ms << ','
              << m.cpu_mean_ms << ',' << m.fallbacks << '\n';
    };
    one(ControllerKind::relay, base.horizon);
    for (int N : {2, 5, 10, 20})
        for (ControllerKind kind : {ControllerKind::mi, ControllerKind::pth}) one(kind, N);
    return 0;
}

int cmd_verify(const CommonOptions& o)
{
    ScenarioConfig cfg = resolve(o);
    cfg.controller = ControllerKind::mi;
    cfg.horizon = 5;
    const ScenarioModels models(cfg);
    int failures = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail) {
        std::printf("[%s] %-34s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
        if (!ok) ++failures;
    };
    char buf[256];

    const ContinuousLinearModel lin = jacobian(models.plant, cfg.pellet, models.operating_point.x);
    Vector dx0 = Vector::Zero(lin.n());
    dx0.head(models.plant.nodes()).setConstant(0.05e20);
    const double zoh = zoh_consistency_error(lin, models.extended, dx0, 1.0);
    std::snprintf(buf, sizeof buf, "relative error %.3e (limit 1e-6)", zoh);
    report("zoh vs fine integration", zoh <= 1e-6, buf);

    const double jac = jacobian_directional_error(models.plant, lin, 10, cfg.seed);
    std::snprintf(buf, sizeof buf, "worst relative mismatch %.3e (limit 1e-4)", jac);
    report("jacobian directional derivatives", jac <= 1e-4, buf);

    const Vector src = pellet_source(cfg.pellet, models.plant.grid, models.plant.device);
    const double bal = particle_balance_error(models.plant, models.operating_point.x, src);
    std::snprintf(buf, sizeof buf, "relative residual %.3e (limit 1e-12)", bal);
    report("particle balance", bal <= 1e-12, buf);

    const KktSuiteReport kkt = qp_kkt_suite(200, cfg.seed);
    const double worst = std::max({kkt.worst_primal, kkt.worst_stationarity, kkt.worst_complementarity, kkt.worst_dual});
    std::snprintf(buf, sizeof buf, "%d/%d optimal, worst residual %.3e (limit 1e-7)", kkt.optimal, kkt.instances, worst);
    report("qp kkt residuals", kkt.optimal == kkt.instances && worst <= 1e-7, buf);

    auto ctrl = make_controller(cfg, models);
    const ClosedLoopTrace trace = run_closed_loop(cfg, models, *ctrl);
    const auto states = sample_states(trace, 50, cfg.seed);
    for (int N : {2, 5}) {
        const OracleReport r = bnb_vs_enumeration(models.setup(N, cfg.reference), states);
        std::snprintf(buf, sizeof buf, "%d/%d matched, max rel diff %.3e", r.matched, r.instances, r.max_rel_diff);
        report("branch and bound vs enumeration N=" + std::to_string(N), r.matched == r.instances, buf);
    }
    const PthQualityReport q = pth_vs_enumeration(models.setup(5, cfg.reference), states, PthSchedule::for_horizon(5));
    std::snprintf(buf, sizeof buf, "%d/%d binary feasible, median gap %.4f", q.binary_feasible, q.instances,
                  q.median_gap);
    report("homotopy vs enumeration N=5", q.binary_feasible == q.instances && q.median_gap <= 0.10, buf);

    std::printf("%s\n", failures == 0 ? "all checks passed" : "some checks failed");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Pellet-fueling density control workbench"};
    app.require_subcommand(1);
    CommonOptions opts;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "Scenario JSON file")->check(CLI::ExistingFile);
        sub->add_option("--controller", opts.controller, "Controller: mi, pth or relay")
            ->check(CLI::IsMember({"mi", "pth", "relay"}));
        sub->add_option("--horizon", opts.horizon, "Prediction horizon N")->check(CLI::PositiveNumber);
        sub->add_option("--out", opts.out_dir, "Output directory");
        sub->add_option("--seed", seed, "Random seed");
    };
    CLI::App* run = app.add_subcommand("run", "Simulate one closed-loop scenario");
    CLI::App* sweep = app.add_subcommand("sweep", "Run N in {2,5,10,20} for both predictive controllers plus the relay");
    CLI::App* verify = app.add_subcommand("verify", "Run numerical and oracle checks");
    for (CLI::App* sub : {run, sweep, verify}) add_common(sub);

    CLI11_PARSE(app, argc, argv);
    for (CLI::App* sub : {run, sweep, verify})
        if (sub->parsed() && sub->count("--seed") > 0) opts.seed = seed;

    try {
        if (run->parsed()) return cmd_run(opts);
        if (sweep->parsed()) return cmd_sweep(opts);
        return cmd_verify(opts);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
