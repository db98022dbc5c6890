// Command-line front end: solvers, Monte Carlo evaluation, significance
// tests and the environment server. Data goes to stdout, diagnostics to
// stderr.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flowhedge/flowhedge.hpp"

namespace fh = flowhedge;

namespace {

constexpr int exit_usage = 2;

fh::ModelParams config_or_default(const std::string& path) {
    return path.empty() ? fh::preset(fh::Preset::general) : fh::load_params(path);
}

void emit(const nlohmann::json& j, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << j.dump(1) << '\n';
    } else {
        fh::write_json_file(out, j);
        std::cerr << "wrote " << out << '\n';
    }
}

fh::GridSpec parse_grid(const std::string& text, std::size_t substeps) {
    fh::GridSpec g;
    std::istringstream in(text);
    char c1 = 0, c2 = 0;
    if (!(in >> g.Q_max >> c1 >> g.n_q >> c2 >> g.n_t) || c1 != ',' || c2 != ',' || !in.eof())
        throw fh::InvalidParams("--grid must look like Qmax,nq,nt (e.g. 40,161,100)");
    g.substeps = substeps;
    fh::validate(g);
    return g;
}

fh::Policy resolve_policy(const std::string& spec, const fh::ModelParams& p, double v_max) {
    if (spec == "builtin:benchmark") return fh::Policy::benchmark(5.0, 100.0, v_max);
    if (spec == "builtin:closed-form") return fh::Policy::closed_form(p, v_max);
    if (spec.rfind("builtin:", 0) == 0) throw fh::InvalidParams("unknown builtin policy '" + spec + "'");
    return fh::load_policy(spec, v_max);
}

nlohmann::json run_compare(const std::vector<double>& a, const std::vector<double>& b) {
    const auto w = fh::welch_t_test(a, b);
    const auto u = fh::mann_whitney_u(a, b);
    const auto sa = fh::summarize(a);
    const auto sb = fh::summarize(b);
    nlohmann::json j = {{"a", fh::to_json(sa)},
                        {"b", fh::to_json(sb)},
                        {"welch", {{"t", w.t_stat}, {"dof", w.dof}, {"p_two_sided", w.p_two_sided}}},
                        {"mann_whitney",
                         {{"U", u.U},
                          {"p_two_sided", u.p_two_sided},
                          {"method", u.method == fh::MannWhitneyMethod::exact ? "exact" : "normal"}}}};
    if (sa.mean != 0.0) j["relative_difference_b_vs_a"] = fh::relative_difference(sa.mean, sb.mean);
    if (w.degenerate) j["welch"]["degenerate"] = true;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Risk-averse inventory hedging: solvers, evaluation and environment server"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "flowhedge 0.1.0");

    // init-config
    std::string init_case = "general";
    std::string init_out;
    auto* init = app.add_subcommand("init-config", "Write a configuration with the default experimental parameters");
    init->add_option("--case", init_case, "Cost regime: psi0 (quadratic costs), eta0 (spread only) or general")
        ->check(CLI::IsMember({"psi0", "eta0", "general"}));
    init->add_option("--out", init_out, "Output file (default: stdout)");

    // solve-riccati
    std::string config_path, out_path, model = "B";
    std::size_t riccati_steps = 0;
    auto* riccati = app.add_subcommand("solve-riccati", "Integrate the matrix Riccati equation backward from T");
    riccati->add_option("--model", model, "A (exponential utility) or B (mean-variance)")
        ->check(CLI::IsMember({"A", "B"}));
    riccati->add_option("--config", config_path, "Configuration JSON")->check(CLI::ExistingFile);
    riccati->add_option("--out", out_path, "Output file (default: stdout)");
    riccati->add_option("--steps", riccati_steps, "RK4 steps (default 10 T/dt)");

    // solve-hjb
    std::string grid_text = "40,161,100", surface_path, boundary = "auto";
    std::size_t substeps = fh::GridSpec{}.substeps;
    auto* hjb = app.add_subcommand("solve-hjb", "Solve the one-dimensional HJB equation and export the speed policy");
    hjb->add_option("--config", config_path, "Configuration JSON")->check(CLI::ExistingFile);
    hjb->add_option("--grid", grid_text, "Qmax,nq,nt")->capture_default_str();
    hjb->add_option("--substeps", substeps, "Implicit steps per stored time step")->capture_default_str();
    hjb->add_option("--boundary", boundary, "Boundary slopes: auto, neumann or extrapolate")
        ->check(CLI::IsMember({"auto", "neumann", "extrapolate"}))
        ->capture_default_str();
    hjb->add_option("--out", out_path, "Policy file")->required();
    hjb->add_option("--surface", surface_path, "Also write the value surface");

    // solve-qvi
    auto* qvi = app.add_subcommand("solve-qvi", "Solve the impulse-control QVI and export the impulse policy");
    qvi->add_option("--config", config_path, "Configuration JSON")->check(CLI::ExistingFile);
    qvi->add_option("--grid", grid_text, "Qmax,nq,nt")->capture_default_str();
    qvi->add_option("--substeps", substeps, "Implicit steps per stored time step")->capture_default_str();
    qvi->add_option("--out", out_path, "Policy file")->required();
    qvi->add_option("--surface", surface_path, "Also write the value surface and no-trade mask");

    // evaluate
    std::string policy_spec;
    std::size_t episodes = 10000, threads = 1;
    std::uint64_t seed = 42;
    bool drop_state_terms = false;
    double v_max = fh::default_v_max();
    auto* eval = app.add_subcommand("evaluate", "Monte Carlo evaluation of a policy");
    eval->add_option("--policy", policy_spec, "Policy file, builtin:benchmark or builtin:closed-form")->required();
    eval->add_option("--config", config_path, "Configuration JSON")->check(CLI::ExistingFile);
    eval->add_option("--episodes", episodes, "Number of episodes")->capture_default_str()->check(CLI::PositiveNumber);
    eval->add_option("--seed", seed, "Seed of the shock streams")->capture_default_str();
    eval->add_option("--threads", threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    eval->add_option("--v-max", v_max, "Speed clamp (lot/day)")->capture_default_str();
    eval->add_flag("--drop-state-terms", drop_state_terms,
                   "Leave out the reward terms that depend on neither inventory nor control");
    eval->add_option("--out", out_path, "Reward CSV (a .stats.json sidecar is written next to it)")->required();

    // compare
    std::string csv_a, csv_b;
    double alpha = 0.05;
    auto* compare = app.add_subcommand(
        "compare", "Welch t and Mann-Whitney U tests on two reward files; exit 1 if either rejects at --alpha");
    compare->add_option("--a", csv_a, "Reference reward CSV")->required()->check(CLI::ExistingFile);
    compare->add_option("--b", csv_b, "Second reward CSV")->required()->check(CLI::ExistingFile);
    compare->add_option("--alpha", alpha, "Significance threshold")->capture_default_str();

    // serve-env
    bool use_stdio = false;
    int port = -1;
    double t0 = 0.0;
    auto* serve = app.add_subcommand("serve-env", "Serve the simulation environment over line-delimited JSON");
    auto* stdio_flag = serve->add_flag("--stdio", use_stdio, "Serve one session on stdin/stdout");
    auto* port_opt = serve->add_option("--port", port, "Listen on 127.0.0.1:PORT")->check(CLI::Range(0, 65535));
    stdio_flag->excludes(port_opt);
    serve->add_option("--config", config_path, "Configuration JSON")->check(CLI::ExistingFile);
    serve->add_option("--seed", seed, "Default session seed")->capture_default_str();
    serve->add_option("--t0", t0, "Default episode start time")->capture_default_str();

    // closed-form
    double at_t = 0.0, at_q = 1.0;
    auto* closed = app.add_subcommand("closed-form", "Closed-form quadratic coefficient and feedback slope");
    closed->add_option("--config", config_path, "Configuration JSON")->check(CLI::ExistingFile);
    closed->add_option("--t", at_t, "Time (day)")->capture_default_str();
    closed->add_option("--q", at_q, "Inventory (lot)")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }

    try {
        if (*init) {
            const auto which = init_case == "psi0"   ? fh::Preset::psi_zero
                               : init_case == "eta0" ? fh::Preset::eta_zero
                                                     : fh::Preset::general;
            emit(nlohmann::json(fh::preset(which)), init_out);
        } else if (*riccati) {
            fh::RiccatiSpec spec;
            spec.model = model == "A" ? fh::RiccatiModel::A : fh::RiccatiModel::B;
            spec.params = config_or_default(config_path);
            spec.n_steps = riccati_steps;
            emit(fh::to_json(fh::solve_riccati(spec)), out_path);
        } else if (*hjb) {
            const auto p = config_or_default(config_path);
            fh::HjbOptions opt;
            opt.boundary = boundary == "neumann"       ? fh::BoundaryCondition::spread_neumann
                           : boundary == "extrapolate" ? fh::BoundaryCondition::extrapolate
                                                       : fh::BoundaryCondition::automatic;
            const auto [surface, policy] = fh::solve_hjb(p, parse_grid(grid_text, substeps), opt);
            emit(fh::to_json(fh::to_policy_file(policy, {{"source", "hjb"}, {"params", p}})), out_path);
            if (!surface_path.empty()) emit(fh::to_json(surface), surface_path);
        } else if (*qvi) {
            auto p = config_path.empty() ? fh::preset(fh::Preset::eta_zero) : fh::load_params(config_path);
            const auto surface = fh::solve_qvi(p, parse_grid(grid_text, substeps));
            emit(fh::to_json(fh::to_policy_file(surface, {{"source", "qvi"}, {"params", p}})), out_path);
            if (!surface_path.empty()) emit(fh::to_json(surface), surface_path);
            for (std::size_t i : {std::size_t{0}, surface.grid.n_t / 2}) {
                if (const auto band = fh::no_trade_interval(surface, i))
                    std::cerr << "no-trade interval at t=" << surface.T * static_cast<double>(i) / static_cast<double>(surface.grid.n_t)
                              << ": [" << band->first << ", " << band->second << "]\n";
            }
        } else if (*eval) {
            const auto p = config_or_default(config_path);
            const auto policy = resolve_policy(policy_spec, p, v_max);
            fh::EvaluateOptions opt;
            opt.threads = threads;
            opt.include_state_only = !drop_state_terms;
            const auto results = fh::evaluate(policy, p, episodes, seed, opt);
            const auto rewards = fh::total_rewards(results);
            fh::export_distribution(rewards, out_path,
                                    {{"policy", policy_spec},
                                     {"episodes", episodes},
                                     {"seed", seed},
                                     {"include_state_only_reward_terms", !drop_state_terms},
                                     {"params", p}});
            std::cout << fh::to_json(fh::summarize(rewards)).dump(1) << '\n';
        } else if (*compare) {
            const auto j = run_compare(fh::read_rewards_csv(csv_a), fh::read_rewards_csv(csv_b));
            std::cout << j.dump(1) << '\n';
            const bool significant = j["welch"]["p_two_sided"].get<double>() < alpha ||
                                     j["mann_whitney"]["p_two_sided"].get<double>() < alpha;
            return significant ? 1 : 0;
        } else if (*serve) {
            fh::SessionConfig base;
            base.params = config_or_default(config_path);
            base.seed = seed;
            base.t0 = t0;
            if (use_stdio) {
                fh::serve_stream(std::cin, std::cout, base);
            } else if (port >= 0) {
                fh::TcpServer server(base, static_cast<std::uint16_t>(port));
                std::cerr << "listening on 127.0.0.1:" << server.port() << '\n';
                server.run();
            } else {
                std::cerr << "serve-env: one of --stdio or --port is required\n";
                return exit_usage;
            }
        } else if (*closed) {
            const auto p = config_or_default(config_path);
            const auto ab = fh::alpha_beta(at_t, p);
            const double slope = fh::closed_form_slope(at_t, p);
            nlohmann::json j = {{"t", at_t},        {"q", at_q},         {"a", fh::a_closed(at_t, p)},
                                {"slope", slope},   {"v", slope * at_q}, {"alpha", ab.alpha},
                                {"beta", ab.beta}};
            std::cout << j.dump(1) << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }
    return 0;
}
