#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "flowhedge/error.hpp"
#include "flowhedge/params.hpp"

namespace flowhedge {

/// Execution cost rate L(v) = psi/2 |v| + eta |v|^(1+phi), in $/day.
inline double exec_cost(double v, const CostParams& cost) {
    const double a = std::abs(v);
    const double power = cost.phi == 1.0 ? a * a : std::pow(a, 1.0 + cost.phi);
    return 0.5 * cost.psi * a + cost.eta * power;
}

/// Terminal execution penalty l(q).
inline double terminal_cost(double q, const CostParams& cost) {
    const double quad = cost.K_terminal * q * q;
    const double lin = 0.5 * cost.psi * std::abs(q);
    switch (cost.terminal_kind) {
        case TerminalKind::quadratic: return quad;
        case TerminalKind::linear: return lin;
        case TerminalKind::sum: return quad + lin;
    }
    return quad;
}

struct MarketState {
    double t = 0.0;
    double q = 0.0;
    double S = 0.0;
    double X = 0.0;
};

inline MarketState initial_state(const ModelParams& p, double t0 = 0.0) {
    return {t0, p.market.q0, p.market.S0, p.market.X0};
}

/// One Euler-Maruyama step of the inventory, price and cash dynamics.
inline MarketState step(const MarketState& s, double v, double dB, double dW, const ModelParams& p) {
    const double dt = p.risk.dt;
    MarketState next;
    next.t = s.t + dt;
    next.q = s.q + v * dt + p.market.nu * dB;
    next.S = s.S + p.market.k * v * dt + p.market.sigma * dW;
    next.X = s.X - v * s.S * dt - exec_cost(v, p.cost) * dt;
    return next;
}

/// Terms of the running reward that do not involve the inventory or the
/// control: rho nu sigma - gamma/2 nu^2 S^2.
inline double state_only_reward(double S, const ModelParams& p) {
    const auto& m = p.market;
    return m.rho * m.nu * m.sigma - 0.5 * p.risk.gamma * m.nu * m.nu * S * S;
}

/// Cost of an instantaneous block trade xi, charged as L(xi / dt) dt: the
/// spread psi/2 |xi| when eta = 0.
inline double impulse_cost(double xi, const CostParams& cost, double dt) { return exec_cost(xi / dt, cost) * dt; }

/// Executes the block trade xi at the current time; the permanent impact
/// moves the price by k xi and the trade is filled at the pre-trade price.
inline MarketState apply_impulse(const MarketState& s, double xi, const ModelParams& p) {
    MarketState next = s;
    next.q = s.q + xi;
    next.S = s.S + p.market.k * xi;
    next.X = s.X - xi * s.S - impulse_cost(xi, p.cost, p.risk.dt);
    return next;
}

/// Reward of the block trade xi: the execution cost, plus the impact gain on
/// the held and traded inventory.
inline double impulse_reward(double q, double xi, const ModelParams& p) {
    return -impulse_cost(xi, p.cost, p.risk.dt) + p.market.k * xi * (q + 0.5 * xi);
}

/// Mean-variance running reward rate ($/day), evaluated at the pre-step state.
inline double running_reward(const MarketState& s, double v, const ModelParams& p,
                             bool include_state_only = true) {
    const auto& m = p.market;
    const double controlled = -exec_cost(v, p.cost) + m.k * v * s.q -
                              0.5 * p.risk.gamma *
                                  (m.sigma * m.sigma * s.q * s.q + 2.0 * m.rho * m.sigma * m.nu * s.q * s.S);
    return include_state_only ? controlled + state_only_reward(s.S, p) : controlled;
}

/// -(k/2) q^2 - l(q).
inline double terminal_reward(double q, double /*S*/, const ModelParams& p) {
    return -0.5 * p.market.k * q * q - terminal_cost(q, p.cost);
}

struct TrajectoryPoint {
    double t = 0.0;
    double q = 0.0;
    double S = 0.0;
    double X = 0.0;
    double xi = 0.0;  ///< block trade executed at t, before the step
    double v = 0.0;   ///< speed applied over [t, t + dt]
    double dB = 0.0;  ///< shocks applied over [t, t + dt]
    double dW = 0.0;
};

/// Points 0..n-1 carry the pre-step state together with the step's controls
/// and shocks; the final point carries the terminal state (xi, v, dB, dW
/// unused).
using Trajectory = std::vector<TrajectoryPoint>;

struct EpisodeResult {
    double total_reward = 0.0;
    double pnl_cash = 0.0;
    double pnl_ito = 0.0;
    std::optional<Trajectory> trajectory;
};

/// Terminal PnL from the final cash/inventory/price, and the same quantity
/// rebuilt from the discretised Ito expansion of the path.
inline std::pair<double, double> pnl_both_ways(const Trajectory& path, const ModelParams& p) {
    if (path.size() < 2) throw Error("trajectory needs at least one step");
    const double dt = p.risk.dt;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (std::abs(path[i + 1].t - path[i].t - dt) > 1e-9 * std::max(1.0, p.risk.T))
            throw Error("trajectory is incomplete: time step mismatch at point " + std::to_string(i));
    }
    const auto& m = p.market;
    const TrajectoryPoint& last = path.back();
    const double tail = -0.5 * m.k * last.q * last.q - terminal_cost(last.q, p.cost);

    const double pnl_cash = last.X + last.q * last.S + tail;

    double drift = 0.0;
    double flow_integral = 0.0;
    double price_integral = 0.0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const auto& pt = path[i];
        // A block trade changes X + qS by its cost and the exact impact term.
        drift += -impulse_cost(pt.xi, p.cost, dt) + m.k * pt.xi * (pt.q + pt.xi);
        const double q = pt.q + pt.xi;
        const double S = pt.S + m.k * pt.xi;
        drift += (-exec_cost(pt.v, p.cost) + m.k * pt.v * q + m.rho * m.nu * m.sigma) * dt;
        flow_integral += m.nu * S * pt.dB;
        price_integral += m.sigma * q * pt.dW;
    }
    const auto& first = path.front();
    const double pnl_ito = first.X + first.q * first.S + drift + flow_integral + price_integral + tail;
    return {pnl_cash, pnl_ito};
}

}  // namespace flowhedge
