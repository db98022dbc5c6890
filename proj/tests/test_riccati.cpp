#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flowhedge/closed_form.hpp"
#include "flowhedge/riccati.hpp"

using namespace flowhedge;
using Catch::Approx;

namespace {

ModelParams quadratic_case() { return preset(Preset::psi_zero); }

RiccatiSolution solve(RiccatiModel model, const ModelParams& p, std::size_t n = 0) {
    RiccatiSpec spec;
    spec.model = model;
    spec.params = p;
    spec.n_steps = n;
    return solve_riccati(spec);
}

// a' = a^2 / eta - gamma sigma^2 / 2 with a(T) = K, written in the coth form
// a = c coth(kappa (T - t) + acoth(K / c)), valid for K > c.
double a_oracle(double t, const ModelParams& p) {
    const double eta = p.cost.eta;
    const double c = std::sqrt(p.risk.gamma * p.market.sigma * p.market.sigma * eta / 2.0);
    const double kappa = c / eta;
    const double x0 = std::atanh(c / p.cost.K_terminal);
    return c / std::tanh(kappa * (p.risk.T - t) + x0);
}

}  // namespace

TEST_CASE("closed-form coefficient and slope", "[riccati]") {
    const auto p = quadratic_case();
    CHECK(a_oracle(0.0, p) == Approx(22.36601617622333).epsilon(1e-13));
    CHECK(a_closed(0.0, p) == Approx(a_oracle(0.0, p)).epsilon(1e-13));
    CHECK(closed_form_slope(0.0, p) == Approx(-4.4732).margin(5e-5));
    CHECK(a_closed(p.risk.T, p) == Approx(p.cost.K_terminal).epsilon(1e-15));
    for (double t = 0.0; t <= 1.0; t += 0.05) CHECK(a_closed(t, p) == Approx(a_oracle(t, p)).epsilon(1e-12));

    auto no_risk = p;
    no_risk.risk.gamma = 0.0;
    // a' = a^2 / eta, a(T) = K  =>  a = K / (1 + K (T - t) / eta).
    CHECK(a_closed(0.25, no_risk) == Approx(500.0 / (1.0 + 500.0 * 0.75 / 5.0)));
}

TEST_CASE("alpha and beta closed forms", "[riccati]") {
    const auto p = quadratic_case();
    const auto end = alpha_beta(p.risk.T, p);
    CHECK(end.alpha == 0.0);
    CHECK(end.beta == 0.0);
    const auto start = alpha_beta(0.0, p);
    CHECK(start.beta == Approx(1e-4).epsilon(1e-14));
    // gamma nu^2 sigma^2 T^2 / 4 = 2e-6 * 100 * 1e8 / 4.
    CHECK(start.alpha == Approx(5000.0).epsilon(1e-14));
    CHECK_THROWS_AS(alpha_beta(1.5, p), InvalidParams);
}

TEST_CASE("Model B decouples when k = rho = 0", "[riccati]") {
    const auto p = quadratic_case();
    const auto sol = solve(RiccatiModel::B, p);
    REQUIRE(sol.times.size() == 1001);
    CHECK(sol.times.front() == 0.0);
    CHECK(sol.times.back() == p.risk.T);

    Eigen::Matrix2d terminal;
    terminal << p.cost.K_terminal, 0.0, 0.0, 0.0;
    CHECK(sol.A_path.back() == terminal);

    // Independent integration of c' = -gamma nu^2 / 2, c(T) = 0, by the
    // trapezoid rule (exact for a constant right-hand side).
    const double rate = p.risk.gamma * p.market.nu * p.market.nu / 2.0;
    double worst_a = 0.0;
    for (std::size_t i = 0; i < sol.times.size(); ++i) {
        const double t = sol.times[i];
        const auto& A = sol.A_path[i];
        CHECK(std::abs(A(0, 1)) < 1e-10);
        CHECK(std::abs(A(0, 1) - A(1, 0)) < 1e-12);
        CHECK(A(1, 1) == Approx(rate * (p.risk.T - t)).margin(1e-10));
        worst_a = std::max(worst_a, std::abs(A(0, 0) - a_oracle(t, p)));
    }
    CHECK(worst_a < 1e-6 * p.cost.K_terminal);
    CHECK(sol.A_path.front()(1, 1) == Approx(1e-4).epsilon(1e-10));
    CHECK(sol.A_path.front()(0, 0) == Approx(22.366).margin(1e-3));
}

TEST_CASE("Model B with no risk and no terminal penalty is identically zero", "[riccati]") {
    auto p = quadratic_case();
    p.risk.gamma = 0.0;
    p.cost.K_terminal = 0.0;
    const auto sol = solve(RiccatiModel::B, p);
    for (const auto& A : sol.A_path) CHECK(A.isZero(0.0));
}

TEST_CASE("RK4 has converged at the default step count", "[riccati]") {
    auto p = quadratic_case();
    p.market.k = 0.3;
    p.market.rho = 0.4;
    const auto coarse = solve(RiccatiModel::B, p);
    const auto fine = solve(RiccatiModel::B, p, 2000);
    const double rel = (coarse.A_path.front() - fine.A_path.front()).cwiseAbs().maxCoeff() /
                       fine.A_path.front().cwiseAbs().maxCoeff();
    CHECK(rel < 1e-8);
    for (const auto& A : coarse.A_path) CHECK((A - A.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Model A coincides with Model B at zero risk aversion", "[riccati]") {
    auto p = quadratic_case();
    p.risk.gamma = 0.0;
    p.market.k = 0.7;
    p.market.rho = -0.3;
    const auto a = solve(RiccatiModel::A, p);
    const auto b = solve(RiccatiModel::B, p);
    for (std::size_t i = 0; i < a.A_path.size(); ++i)
        CHECK((a.A_path[i] - b.A_path[i]).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, b.A_path[i].norm()));

    p.cost.K_terminal = 0.0;
    for (const auto& A : solve(RiccatiModel::A, p).A_path) CHECK(A.isZero(0.0));
}

TEST_CASE("Model A completes for small risk aversion", "[riccati]") {
    auto p = quadratic_case();
    p.risk.gamma *= 1e-3;
    const auto one = solve(RiccatiModel::A, p);
    const auto two = solve(RiccatiModel::A, p, 2000);
    const auto four = solve(RiccatiModel::A, p, 4000);
    CHECK(one.A_path.front().allFinite());
    // Fourth-order convergence: halving the step cuts the change by about 16.
    const double d1 = (one.A_path.front() - two.A_path.front()).cwiseAbs().maxCoeff();
    const double d2 = (two.A_path.front() - four.A_path.front()).cwiseAbs().maxCoeff();
    CHECK(d1 < 1e-7 * one.A_path.front().cwiseAbs().maxCoeff());
    CHECK(d1 / d2 > 12.0);
    for (const auto& A : one.A_path) CHECK((A - A.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Model A blow-up is detected", "[riccati]") {
    // Empirical sweep: strong risk aversion on large flow makes the
    // inventory coefficient of U negative and the solution explodes.
    bool blew_up = false;
    for (double gamma : {1e-6, 1e-4, 1e-2, 1.0}) {
        auto p = quadratic_case();
        p.risk.gamma = gamma;
        p.market.nu = 1000.0;
        p.market.rho = 0.5;
        RiccatiSpec spec;
        spec.model = RiccatiModel::A;
        spec.params = p;
        try {
            solve_riccati(spec);
        } catch (const BlowUpError& e) {
            blew_up = true;
            CHECK(e.t_blow() > 0.0);
            CHECK(e.t_blow() <= p.risk.T);
        }
    }
    CHECK(blew_up);
}

TEST_CASE("theta solves the reduced HJB equation", "[riccati]") {
    // 0 = theta_t + nu^2/2 theta_qq + sigma^2/2 theta_SS + rho sigma nu theta_qS
    //     + rho nu sigma - k nu^2 / 2 - gamma/2 (sigma^2 q^2 + nu^2 S^2 + 2 rho sigma nu q S)
    //     + (theta_q + k theta_S)^2 / (4 eta)
    // checked with finite differences (exact in q and S for a quadratic).
    auto p = quadratic_case();
    p.market.k = 0.5;
    p.market.rho = 0.3;
    const auto sol = solve(RiccatiModel::B, p, 4000);
    const auto& m = p.market;
    const double g = p.risk.gamma;
    const double dq = 1.0;
    const double dS = 50.0;
    auto th = [&](double t, double q, double S) { return theta_quadratic(sol, t, q, S); };

    for (std::size_t i : {400u, 1600u, 3000u}) {
        const double t = sol.times[i];
        const double h = sol.times[i + 1] - sol.times[i];
        for (double q : {-7.0, 0.0, 3.0}) {
            for (double S : {-1000.0, 0.0, 500'000.0}) {
                const double th_t = (th(sol.times[i + 1], q, S) - th(sol.times[i - 1], q, S)) / (2.0 * h);
                const double th_q = (th(t, q + dq, S) - th(t, q - dq, S)) / (2.0 * dq);
                const double th_S = (th(t, q, S + dS) - th(t, q, S - dS)) / (2.0 * dS);
                const double th_qq = (th(t, q + dq, S) - 2.0 * th(t, q, S) + th(t, q - dq, S)) / (dq * dq);
                const double th_SS = (th(t, q, S + dS) - 2.0 * th(t, q, S) + th(t, q, S - dS)) / (dS * dS);
                const double th_qS = (th(t, q + dq, S + dS) - th(t, q + dq, S - dS) - th(t, q - dq, S + dS) +
                                      th(t, q - dq, S - dS)) /
                                     (4.0 * dq * dS);
                const double risk = 0.5 * g * (m.sigma * m.sigma * q * q + m.nu * m.nu * S * S +
                                               2.0 * m.rho * m.sigma * m.nu * q * S);
                const double grad = th_q + m.k * th_S;
                const double residual = th_t + 0.5 * m.nu * m.nu * th_qq + 0.5 * m.sigma * m.sigma * th_SS +
                                        m.rho * m.sigma * m.nu * th_qS + m.rho * m.nu * m.sigma -
                                        0.5 * m.k * m.nu * m.nu - risk + grad * grad / (4.0 * p.cost.eta);
                const double scale = 1.0 + std::abs(risk) + std::abs(th_t) + grad * grad / (4.0 * p.cost.eta);
                CHECK(std::abs(residual) / scale < 1e-6);
            }
        }
    }
}

TEST_CASE("theta terminal value and S-dependence", "[riccati]") {
    const auto p = quadratic_case();
    const auto sol = solve(RiccatiModel::B, p);
    CHECK(theta_quadratic(sol, p.risk.T, 3.0, 12345.0) == -p.cost.K_terminal * 9.0);
    for (double t : {0.0, 0.37, 0.8}) {
        const double beta = alpha_beta(t, p).beta;
        for (double S : {-2000.0, 400'000.0}) {
            const double d = theta_quadratic(sol, t, 2.0, S) - theta_quadratic(sol, t, 2.0, 0.0);
            CHECK(d == Approx(-beta * S * S).epsilon(1e-6));
        }
        // At the origin only the integrated trace survives (entering with a minus sign).
        const auto i = static_cast<std::size_t>(std::llround(t * 1000));
        CHECK(theta_quadratic(sol, sol.times[i], 0.0, 0.0) == -sol.trace_integral[i]);
    }
}

TEST_CASE("Riccati feedback policy", "[riccati]") {
    const auto p = quadratic_case();
    const auto sol = solve(RiccatiModel::B, p);
    CHECK(riccati_policy(sol, 0.0, 0.0, 0.0) == 0.0);
    CHECK(riccati_policy(sol, 0.0, 1.0, 0.0) == Approx(-4.4732).margin(5e-5));
    CHECK(riccati_policy(sol, 0.3, 1.0, 0.0) == riccati_policy(sol, 0.3, 1.0, 700'000.0));
    CHECK_THROWS_AS(riccati_policy(sol, -0.1, 1.0, 0.0), InvalidParams);
    CHECK_THROWS_AS(riccati_policy(sol, 1.1, 1.0, 0.0), InvalidParams);
}

TEST_CASE("Riccati solution JSON round trip", "[riccati]") {
    auto p = quadratic_case();
    p.market.k = 0.2;
    const auto sol = solve(RiccatiModel::B, p);
    const auto back = riccati_from_json(nlohmann::json::parse(to_json(sol).dump()));
    REQUIRE(back.times == sol.times);
    for (std::size_t i = 0; i < sol.times.size(); ++i) CHECK(back.A_path[i] == sol.A_path[i]);
    CHECK(back.trace_integral == sol.trace_integral);
    CHECK(back.const_drift == sol.const_drift);

    auto bad = to_json(sol);
    bad["a11"][3] = nullptr;
    CHECK_THROWS_AS(riccati_from_json(bad), FormatError);
}

TEST_CASE("Riccati solver input validation", "[riccati]") {
    RiccatiSpec spec;
    spec.params = preset(Preset::general);  // psi > 0
    CHECK_THROWS_AS(solve_riccati(spec), InvalidParams);
    spec.params = preset(Preset::eta_zero);
    CHECK_THROWS_AS(solve_riccati(spec), InvalidParams);
    CHECK_THROWS_AS(solve_riccati_A(RiccatiSpec{RiccatiModel::B, quadratic_case()}), InvalidParams);
}
