#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "flowhedge/error.hpp"
#include "flowhedge/params.hpp"

namespace flowhedge {

enum class RiccatiModel { A, B };

/// Quadratic-cost problem: L(v) = eta v^2, l(q) = K q^2.
struct RiccatiSpec {
    RiccatiModel model = RiccatiModel::B;
    ModelParams params;
    std::size_t n_steps = 0;             ///< 0 selects 10 * T / dt
    double blowup_threshold = 1e12;      ///< Model A only, on ||A||_inf
};

/// Time-sampled solution A(t) of the Riccati terminal-value problem together
/// with the additive terms needed to rebuild theta(t, q, S).
struct RiccatiSolution {
    RiccatiModel model = RiccatiModel::B;
    ModelParams params;
    std::vector<double> times;             ///< ascending, times.front() = 0, times.back() = T
    std::vector<Eigen::Matrix2d> A_path;
    std::vector<double> trace_integral;    ///< int_t^T Tr(J Sigma J A(s)) ds
    std::vector<double> const_drift;       ///< (nu^2 k / 2 - rho sigma nu)(T - t)
};

namespace riccati_detail {

struct Coefficients {
    Eigen::Matrix2d sigma;  // covariance of (price, flow) shocks
    Eigen::Matrix2d jsj;    // J Sigma J
    Eigen::Matrix2d U, Y, Q;
};

inline Coefficients coefficients(RiccatiModel model, const ModelParams& p) {
    const auto& m = p.market;
    const double eta = p.cost.eta;
    const double g = p.risk.gamma;
    Coefficients c;
    c.sigma << m.sigma * m.sigma, m.rho * m.sigma * m.nu, m.rho * m.sigma * m.nu, m.nu * m.nu;
    Eigen::Matrix2d J;
    J << 0.0, 1.0, 1.0, 0.0;
    c.jsj = J * c.sigma * J;
    Eigen::Matrix2d impact;
    impact << 1.0, m.k, m.k, m.k * m.k;
    if (model == RiccatiModel::B) {
        c.U = impact / eta;
        c.Y.setZero();
        c.Q = -0.5 * g * c.sigma;
    } else {
        Eigen::Matrix2d L;
        L << 1.0, 0.0, -m.k, 1.0;
        c.U = impact / eta - 2.0 * g * c.jsj;
        c.Y = g * J * c.sigma * L;
        c.Q = -0.5 * g * L.transpose() * c.sigma * L;
    }
    return c;
}

inline Eigen::Matrix2d rhs(const Coefficients& c, const Eigen::Matrix2d& A) {
    return A * c.U * A + A * c.Y + c.Y.transpose() * A + c.Q;
}

inline void validate_spec(const RiccatiSpec& spec) {
    validate(spec.params);
    const auto& cost = spec.params.cost;
    if (!(cost.eta > 0.0)) throw InvalidParams("Riccati solver requires eta > 0");
    if (cost.psi != 0.0) throw InvalidParams("Riccati solver requires psi = 0");
    if (cost.phi != 1.0) throw InvalidParams("Riccati solver requires phi = 1");
    if (cost.terminal_kind != TerminalKind::quadratic)
        throw InvalidParams("Riccati solver requires a quadratic terminal penalty");
}

}  // namespace riccati_detail

/// Integrates A' = A U A + A Y + Y^T A + Q backward from A(T) = [[K,0],[0,0]]
/// with classical RK4, carrying int_t^T Tr(J Sigma J A) as an extra state.
/// Model B is the special case Y = 0, U = M / eta, Q = -gamma/2 Sigma.
inline RiccatiSolution solve_riccati(const RiccatiSpec& spec) {
    riccati_detail::validate_spec(spec);
    const auto& p = spec.params;
    const double T = p.risk.T;
    const std::size_t n = spec.n_steps ? spec.n_steps : 10 * p.risk.n_steps();
    const double h = T / static_cast<double>(n);
    const auto coef = riccati_detail::coefficients(spec.model, p);

    RiccatiSolution sol;
    sol.model = spec.model;
    sol.params = p;
    sol.times.resize(n + 1);
    sol.A_path.resize(n + 1);
    sol.trace_integral.resize(n + 1);
    sol.const_drift.resize(n + 1);

    const double drift_rate = 0.5 * p.market.nu * p.market.nu * p.market.k -
                              p.market.rho * p.market.sigma * p.market.nu;
    for (std::size_t i = 0; i <= n; ++i) {
        sol.times[i] = T * static_cast<double>(i) / static_cast<double>(n);
        sol.const_drift[i] = drift_rate * (T - sol.times[i]);
    }

    Eigen::Matrix2d A;
    A << p.cost.K_terminal, 0.0, 0.0, 0.0;
    double integral = 0.0;
    sol.A_path[n] = A;
    sol.trace_integral[n] = 0.0;

    // In reversed time tau = T - t: dA/dtau = -F(A), dI/dtau = Tr(J Sigma J A).
    auto dA = [&](const Eigen::Matrix2d& X) -> Eigen::Matrix2d { return -riccati_detail::rhs(coef, X); };
    auto dI = [&](const Eigen::Matrix2d& X) { return (coef.jsj * X).trace(); };

    for (std::size_t i = n; i-- > 0;) {
        const Eigen::Matrix2d k1 = dA(A);
        const double l1 = dI(A);
        const Eigen::Matrix2d A2 = A + 0.5 * h * k1;
        const Eigen::Matrix2d k2 = dA(A2);
        const double l2 = dI(A2);
        const Eigen::Matrix2d A3 = A + 0.5 * h * k2;
        const Eigen::Matrix2d k3 = dA(A3);
        const double l3 = dI(A3);
        const Eigen::Matrix2d A4 = A + h * k3;
        const Eigen::Matrix2d k4 = dA(A4);
        const double l4 = dI(A4);

        A += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        A = 0.5 * (A + A.transpose()).eval();
        integral += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);

        const double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
        if (!std::isfinite(norm) || (spec.model == RiccatiModel::A && norm > spec.blowup_threshold))
            throw BlowUpError(sol.times[i], norm);

        sol.A_path[i] = A;
        sol.trace_integral[i] = integral;
    }
    return sol;
}

inline RiccatiSolution solve_riccati_B(RiccatiSpec spec) {
    if (spec.model != RiccatiModel::B) throw InvalidParams("solve_riccati_B needs model B");
    return solve_riccati(spec);
}

inline RiccatiSolution solve_riccati_A(RiccatiSpec spec) {
    if (spec.model != RiccatiModel::A) throw InvalidParams("solve_riccati_A needs model A");
    return solve_riccati(spec);
}

namespace riccati_detail {

struct Sample {
    Eigen::Matrix2d A;
    double trace_integral;
    double const_drift;
};

/// Linear interpolation in t; node values are returned exactly.
inline Sample sample(const RiccatiSolution& sol, double t) {
    const double T = sol.times.back();
    if (!(t >= 0.0 && t <= T)) throw InvalidParams("t outside [0, T]");
    const std::size_t n = sol.times.size() - 1;
    const double h = T / static_cast<double>(n);
    std::size_t i = std::min(static_cast<std::size_t>(t / h), n);
    if (i < n && sol.times[i + 1] <= t) ++i;
    while (i > 0 && sol.times[i] > t) --i;
    if (i == n || sol.times[i] == t)
        return {sol.A_path[i], sol.trace_integral[i], sol.const_drift[i]};
    const double w = (t - sol.times[i]) / (sol.times[i + 1] - sol.times[i]);
    return {sol.A_path[i] + w * (sol.A_path[i + 1] - sol.A_path[i]),
            sol.trace_integral[i] + w * (sol.trace_integral[i + 1] - sol.trace_integral[i]),
            sol.const_drift[i] + w * (sol.const_drift[i + 1] - sol.const_drift[i])};
}

}  // namespace riccati_detail

/// Linear feedback v = -(1/eta) (1, k) A(t) (q, S)^T.
inline double riccati_policy(const RiccatiSolution& sol, double t, double q, double S) {
    const auto s = riccati_detail::sample(sol, t);
    const Eigen::Vector2d x(q, S);
    const Eigen::Vector2d row(1.0, sol.params.market.k);
    return -row.dot(s.A * x) / sol.params.cost.eta;
}

/// theta(t,q,S) = -(q,S) A(t) (q,S)^T - int_t^T Tr(J Sigma J A) ds
///                - (nu^2 k / 2 - rho sigma nu)(T - t).
/// The additive terms carry the signs that make theta solve the reduced HJB
/// equation; at t = T this is exactly -K q^2.
inline double theta_quadratic(const RiccatiSolution& sol, double t, double q, double S) {
    const auto s = riccati_detail::sample(sol, t);
    const Eigen::Vector2d x(q, S);
    return -x.dot(s.A * x) - s.trace_integral - s.const_drift;
}

inline nlohmann::json to_json(const RiccatiSolution& sol) {
    nlohmann::json j;
    j["model"] = sol.model == RiccatiModel::A ? "A" : "B";
    j["params"] = sol.params;
    std::vector<double> a11, a12, a22;
    for (const auto& A : sol.A_path) {
        a11.push_back(A(0, 0));
        a12.push_back(A(0, 1));
        a22.push_back(A(1, 1));
    }
    j["times"] = sol.times;
    j["a11"] = a11;
    j["a12"] = a12;
    j["a22"] = a22;
    j["trace_integral"] = sol.trace_integral;
    j["const_drift"] = sol.const_drift;
    return j;
}

inline RiccatiSolution riccati_from_json(const nlohmann::json& j) {
    try {
        RiccatiSolution sol;
        const auto model = j.at("model").get<std::string>();
        if (model != "A" && model != "B") throw FormatError("model must be \"A\" or \"B\"");
        sol.model = model == "A" ? RiccatiModel::A : RiccatiModel::B;
        sol.params = params_from_json(j.at("params"));
        sol.times = j.at("times").get<std::vector<double>>();
        const auto a11 = j.at("a11").get<std::vector<double>>();
        const auto a12 = j.at("a12").get<std::vector<double>>();
        const auto a22 = j.at("a22").get<std::vector<double>>();
        sol.trace_integral = j.at("trace_integral").get<std::vector<double>>();
        sol.const_drift = j.at("const_drift").get<std::vector<double>>();
        const std::size_t n = sol.times.size();
        if (n < 2 || a11.size() != n || a12.size() != n || a22.size() != n ||
            sol.trace_integral.size() != n || sol.const_drift.size() != n)
            throw FormatError("Riccati arrays must share the time grid length (>= 2)");
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0 && !(sol.times[i] > sol.times[i - 1])) throw FormatError("time grid not increasing");
            for (double v : {sol.times[i], a11[i], a12[i], a22[i], sol.trace_integral[i], sol.const_drift[i]})
                if (!std::isfinite(v)) throw FormatError("non-finite entry in Riccati solution");
            Eigen::Matrix2d A;
            A << a11[i], a12[i], a12[i], a22[i];
            sol.A_path.push_back(A);
        }
        return sol;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("Riccati solution: ") + e.what());
    }
}

}  // namespace flowhedge
