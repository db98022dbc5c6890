// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "flowhedge/flowhedge.hpp"

using namespace flowhedge;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double time_limit;  // seconds
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// a' = a^2 / eta - gamma sigma^2 / 2, a(T) = K, in coth form (K above the fixed point).
double a_oracle(double t, const ModelParams& p) {
    const double c = std::sqrt(p.risk.gamma * p.market.sigma * p.market.sigma * p.cost.eta / 2.0);
    return c / std::tanh(c / p.cost.eta * (p.risk.T - t) + std::atanh(c / p.cost.K_terminal));
}

Outcome riccati_agreement() {
    const auto p = preset(Preset::psi_zero);
    RiccatiSpec spec;
    spec.params = p;
    const auto sol = solve_riccati(spec);
    double e11 = 0.0, e12 = 0.0, e22 = 0.0;
    for (std::size_t i = 0; i < sol.times.size(); ++i) {
        const double t = sol.times[i];
        const auto& A = sol.A_path[i];
        e11 = std::max(e11, std::abs(A(0, 0) - a_oracle(t, p)));
        e12 = std::max({e12, std::abs(A(0, 1)), std::abs(A(1, 0))});
        e22 = std::max(e22, std::abs(A(1, 1) - 0.5 * p.risk.gamma * p.market.nu * p.market.nu * (p.risk.T - t)));
    }
    const bool ok = e11 < 1e-6 * p.cost.K_terminal && e12 < 1e-10 && e22 < 1e-10;
    return {ok, fmt("max|A11-a|=%.3e (tol %.1e) max|A12|=%.3e max|A22-c|=%.3e", e11, 1e-6 * p.cost.K_terminal, e12, e22)};
}

Outcome closed_form_value() {
    const auto p = preset(Preset::psi_zero);
    const double lib = closed_form_slope(0.0, p);
    const double oracle = -a_oracle(0.0, p) / p.cost.eta;
    const bool ok = std::round(lib * 1e4) == -44732.0 && std::abs(lib - oracle) < 1e-12 * std::abs(oracle);
    return {ok, fmt("slope=%.6f oracle=%.6f target=-4.4732", lib, oracle)};
}

Outcome hjb_vs_closed_form() {
    const auto p = preset(Preset::psi_zero);
    const GridSpec g;  // [-40, 40] x 161, n_t = 100
    const auto [surface, policy] = solve_hjb(p, g);
    double worst = 0.0;
    for (std::size_t i = 0; i <= g.n_t; ++i) {
        const double t = p.risk.T * static_cast<double>(i) / static_cast<double>(g.n_t);
        if (t > 0.9 * p.risk.T + 1e-12) break;
        const double slope = -a_oracle(t, p) / p.cost.eta;
        for (std::size_t j = 0; j < g.n_q; ++j) {
            const double q = g.q(j);
            if (q == 0.0 || std::abs(q) > 20.0) continue;
            worst = std::max(worst, std::abs(policy.action(i, j) / q / slope - 1.0));
        }
    }
    return {worst < 0.02, fmt("max relative slope error %.4f (tol 0.02) on %zux%zu grid", worst, g.n_q, g.n_t)};
}

Outcome qvi_structure() {
    const auto s = solve_qvi(preset(Preset::eta_zero), GridSpec{});
    const auto& g = s.grid;
    const auto b0 = no_trade_interval(s, 0);
    const auto bmid = no_trade_interval(s, g.n_t / 2);
    const auto blate = no_trade_interval(s, 99);
    if (!b0 || !bmid || !blate) return {false, "empty no-trade interval"};
    const bool symmetric = b0->first == -b0->second && b0->second > 0.0;
    const double w_mid = bmid->second - bmid->first, w_late = blate->second - blate->first;
    double lip = 0.0;
    for (std::size_t i = 0; i <= g.n_t; ++i)
        for (std::size_t j = 0; j + 1 < g.n_q; ++j)
            lip = std::max(lip, std::abs(s.theta_tilde(i, j + 1) - s.theta_tilde(i, j)) / g.dq());
    const bool ok = symmetric && w_late < w_mid && lip <= 0.5 * s.psi + 1e-8;
    return {ok, fmt("band(0)=[%g,%g] width(0.5T)=%g width(0.99T)=%g max|dtheta/dq|=%.6f (bound %g)", b0->first,
                    b0->second, w_mid, w_late, lip, 0.5 * s.psi)};
}

Outcome dominance(Preset which) {
    const auto p = preset(which);
    std::optional<Policy> pol;
    const char* label = "";
    switch (which) {
        case Preset::psi_zero:
            pol = Policy::closed_form(p);
            label = "psi=0 closed form";
            break;
        case Preset::eta_zero:
            pol = Policy::grid(to_policy_file(solve_qvi(p, GridSpec{})));
            label = "eta=0 QVI impulses";
            break;
        case Preset::general:
            pol = Policy::grid(to_policy_file(solve_hjb(p, GridSpec{}).second));
            label = "general HJB";
            break;
    }
    EvaluateOptions opt;
    opt.threads = std::max(1u, std::thread::hardware_concurrency());
    opt.include_state_only = false;
    const std::size_t n = 10000;
    const auto a = total_rewards(evaluate(*pol, p, n, 42, opt));
    const auto b = total_rewards(evaluate(Policy::benchmark(), p, n, 42, opt));
    const auto mw = mann_whitney_u(a, b);
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double d_mean = 0.0, d_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) d_mean += (a[i] - b[i]) / n;
    for (std::size_t i = 0; i < n; ++i) d_sq += (a[i] - b[i] - d_mean) * (a[i] - b[i] - d_mean);
    const double d_se = std::sqrt(d_sq / (n - 1) / n);
    return {ma > mb && mw.p_two_sided < 0.01,
            fmt("%s: mean %.1f vs benchmark %.1f, MW p=%.2e; paired diff %.1f +/- %.1f (se)", label, ma, mb,
                mw.p_two_sided, d_mean, d_se)};
}

Outcome pnl_halving() {
    auto mean_gap = [](ModelParams p, double dt) {
        p.risk.dt = dt;
        const auto pol = Policy::closed_form(p);
        double s = 0.0;
        for (std::uint64_t i = 0; i < 1000; ++i) {
            const auto r = run_episode(pol, p, 7, i);
            s += std::abs(r.pnl_cash - r.pnl_ito);
        }
        return s / 1000.0;
    };
    const auto p = preset(Preset::general);
    const double g1 = mean_gap(p, 0.01), g2 = mean_gap(p, 0.005);
    const double ratio = g2 / g1;
    return {ratio >= 0.4 && ratio <= 0.6,
            fmt("mean|cash-ito| %.4g (dt=0.01) -> %.4g (dt=0.005), ratio %.3f (target 0.5 +/- 20%%)", g1, g2, ratio)};
}

double t_two_sided(double t, double dof) {
    const double logc = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(dof * M_PI);
    auto f = [&](double x) { return std::exp(logc - 0.5 * (dof + 1.0) * std::log1p(x * x / dof)); };
    const double x = std::abs(t);
    const int m = 20000;
    const double h = x / m;
    double s = f(0.0) + f(x);
    for (int i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return 1.0 - 2.0 * s * h / 3.0;
}

double enumerate_mw_p(std::size_t na, std::size_t nb, double u_obs) {
    std::vector<int> pick(na + nb, 0);
    std::fill(pick.end() - static_cast<long>(na), pick.end(), 1);
    double total = 0.0, le = 0.0, ge = 0.0;
    do {
        double rs = 0.0;
        for (std::size_t i = 0; i < pick.size(); ++i)
            if (pick[i]) rs += static_cast<double>(i + 1);
        const double u = rs - static_cast<double>(na * (na + 1)) / 2.0;
        total += 1.0;
        le += u <= u_obs;
        ge += u >= u_obs;
    } while (std::next_permutation(pick.begin(), pick.end()));
    return std::min(1.0, 2.0 * std::min(le, ge) / total);
}

Outcome stats_correctness() {
    std::mt19937_64 rng(8);
    double worst_mw = 0.0, worst_t = 0.0;
    std::size_t pairs = 0;
    for (std::size_t na = 2; na <= 8; ++na)
        for (std::size_t nb = 2; nb <= 8; ++nb)
            for (int rep = 0; rep < 3; ++rep) {
                std::vector<double> pool(40);
                std::iota(pool.begin(), pool.end(), -10.0);
                std::shuffle(pool.begin(), pool.end(), rng);
                const std::vector<double> a(pool.begin(), pool.begin() + static_cast<long>(na));
                const std::vector<double> b(pool.begin() + static_cast<long>(na),
                                            pool.begin() + static_cast<long>(na + nb));
                const auto mw = mann_whitney_u(a, b);
                worst_mw = std::max(worst_mw, std::abs(mw.p_two_sided - enumerate_mw_p(na, nb, mw.U)));
                const auto w = welch_t_test(a, b);
                worst_t = std::max(worst_t, std::abs(w.p_two_sided - t_two_sided(w.t_stat, w.dof)));
                ++pairs;
            }
    return {worst_mw < 1e-12 && worst_t < 1e-8,
            fmt("%zu pairs: max|p_MW - enumeration|=%.2e, max|p_Welch - quadrature|=%.2e", pairs, worst_mw, worst_t)};
}

Outcome protocol_fidelity() {
    SessionConfig c;
    c.params = preset(Preset::general);
    c.seed = 2024;
    const auto pol = Policy::benchmark();
    const auto direct = evaluate(pol, c.params, 100, c.seed);
    Session s(c);
    std::size_t mismatches = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        auto r = nlohmann::json::parse(s.handle_line(nlohmann::json{{"cmd", "reset"}, {"episode", i}}.dump()));
        double total = 0.0;
        for (bool done = false; !done;) {
            const auto& o = r["obs"];
            const double v = pol.act(o["t"], o["q"], o["S"]).value;
            r = nlohmann::json::parse(s.handle_line(nlohmann::json{{"cmd", "step"}, {"v", v}}.dump()));
            total += r["reward"].get<double>();
            done = r["done"];
        }
        mismatches += total != direct[i].total_reward;
    }
    return {mismatches == 0, fmt("%zu of 100 episodes differ from in-process evaluation", mismatches)};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"riccati-closed-form-agreement", 1.0, riccati_agreement},
        {"closed-form-slope", 1.0, closed_form_value},
        {"hjb-vs-closed-form", 5.0, hjb_vs_closed_form},
        {"qvi-structure", 10.0, qvi_structure},
        {"dominance-psi0", 30.0, [] { return dominance(Preset::psi_zero); }},
        {"dominance-eta0", 30.0, [] { return dominance(Preset::eta_zero); }},
        {"dominance-general", 30.0, [] { return dominance(Preset::general); }},
        {"pnl-identity-halving", 10.0, pnl_halving},
        {"stats-vs-enumeration", 5.0, stats_correctness},
        {"protocol-fidelity", 5.0, protocol_fidelity},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < c.time_limit;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("%s %s: %s [%.2fs, limit %.0fs%s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(),
                    secs, c.time_limit, in_time ? "" : ", too slow");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
