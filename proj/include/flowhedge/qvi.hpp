#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowhedge/core_model.hpp"
#include "flowhedge/error.hpp"
#include "flowhedge/grid.hpp"
#include "flowhedge/params.hpp"
#include "flowhedge/policy_file.hpp"

namespace flowhedge {

struct QviOptions {
    double tolerance = 1e-10;     ///< minimum improvement that counts as an intervention
    std::size_t max_sweeps = 100;
};

/// Impulse-control value surface. impulse_target(i, j) is the post-trade
/// inventory at node (t_i, q_j); it equals q_j on no-trade nodes.
struct QviSurface {
    GridSpec grid;
    double T = 1.0;
    double psi = 0.0;
    Table<double> theta_tilde;
    Table<unsigned char> no_trade_mask;
    Table<double> impulse_target;
};

namespace qvi_detail {

/// Implicit step of theta_t + nu^2/2 theta_qq - gamma/2 sigma^2 q^2 = 0 with
/// d theta / dq (+-Q_max) = -+ psi/2 imposed through ghost nodes.
inline std::vector<double> diffuse(const std::vector<double>& next, const std::vector<double>& source,
                                   const ModelParams& p, const GridSpec& g, double h) {
    const std::size_t n = g.n_q;
    const double dq = g.dq();
    const double d = 0.5 * p.market.nu * p.market.nu / (dq * dq);
    const double slope = 0.5 * p.cost.psi;
    TridiagonalSystem sys(n);
    for (std::size_t j = 0; j < n; ++j) {
        sys.diag[j] = 1.0 + 2.0 * h * d;
        sys.lower[j] = -h * d;
        sys.upper[j] = -h * d;
        sys.rhs[j] = next[j] + h * source[j];
    }
    sys.upper[0] *= 2.0;
    sys.rhs[0] -= h * d * 2.0 * dq * slope;
    sys.lower[n - 1] *= 2.0;
    sys.rhs[n - 1] -= h * d * 2.0 * dq * slope;
    return sys.solve();
}

/// Intervention operator theta_j <- max_m theta_m - psi/2 |q_m - q_j| by
/// alternating left-to-right and right-to-left sweeps until a full sweep
/// improves no node by more than `tol`. target[j] is the node traded to.
inline void intervene(std::vector<double>& theta, std::vector<std::size_t>& target, double cost_per_node,
                      const QviOptions& opt, std::size_t step) {
    const std::size_t n = theta.size();
    target.resize(n);
    for (std::size_t j = 0; j < n; ++j) target[j] = j;
    for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        bool improved = false;
        for (std::size_t j = 1; j < n; ++j) {
            const double candidate = theta[j - 1] - cost_per_node;
            if (candidate > theta[j] + opt.tolerance) {
                theta[j] = candidate;
                target[j] = target[j - 1];
                improved = true;
            }
        }
        for (std::size_t j = n - 1; j-- > 0;) {
            const double candidate = theta[j + 1] - cost_per_node;
            if (candidate > theta[j] + opt.tolerance) {
                theta[j] = candidate;
                target[j] = target[j + 1];
                improved = true;
            }
        }
        if (!improved) return;
    }
    throw ConvergenceError("QVI intervention sweeps did not converge", step);
}

}  // namespace qvi_detail

/// Solves max{theta_t + nu^2/2 theta_qq - gamma/2 sigma^2 q^2,
///            max_xi theta(t, q + xi) - theta(t, q) - psi/2 |xi|} = 0
/// backward from theta(T, q) = -l(q) by operator splitting: an implicit
/// diffusion step followed by the intervention operator restricted to grid
/// targets.
inline QviSurface solve_qvi(const ModelParams& p, const GridSpec& g, const QviOptions& opt = {}) {
    validate(p);
    validate(g);
    if (!is_reduced(p)) throw InvalidParams("QVI solver requires k = 0 and rho = 0");
    if (!(p.cost.psi > 0.0)) throw InvalidParams("QVI solver requires psi > 0");
    if (p.cost.eta != 0.0) throw InvalidParams("QVI solver requires eta = 0");

    const std::size_t n = g.n_q;
    const double cost_per_node = 0.5 * p.cost.psi * g.dq();
    QviSurface out{g,
                   p.risk.T,
                   p.cost.psi,
                   Table<double>(g.n_t + 1, n),
                   Table<unsigned char>(g.n_t + 1, n, 1),
                   Table<double>(g.n_t + 1, n)};

    std::vector<double> source(n);
    const double risk = 0.5 * p.risk.gamma * p.market.sigma * p.market.sigma;
    for (std::size_t j = 0; j < n; ++j) source[j] = -risk * g.q(j) * g.q(j);

    auto record = [&](std::size_t i, const std::vector<double>& theta, const std::vector<std::size_t>& target) {
        for (std::size_t j = 0; j < n; ++j) {
            out.theta_tilde(i, j) = theta[j];
            out.no_trade_mask(i, j) = target[j] == j;
            out.impulse_target(i, j) = g.q(target[j]);
        }
    };

    std::vector<double> theta(n);
    std::vector<std::size_t> target;
    for (std::size_t j = 0; j < n; ++j) theta[j] = -terminal_cost(g.q(j), p.cost);
    qvi_detail::intervene(theta, target, cost_per_node, opt, g.n_t);
    record(g.n_t, theta, target);

    const double h = p.risk.T / static_cast<double>(g.n_t * g.substeps);
    for (std::size_t i = g.n_t; i-- > 0;) {
        for (std::size_t s = 0; s < g.substeps; ++s) {
            theta = qvi_detail::diffuse(theta, source, p, g, h);
            for (double v : theta)
                if (!std::isfinite(v)) throw ConvergenceError("QVI diffusion produced a non-finite value", i);
            qvi_detail::intervene(theta, target, cost_per_node, opt, i);
        }
        record(i, theta, target);
    }
    return out;
}

/// Inventory interval [lo, hi] of contiguous no-trade nodes around q = 0 at
/// time node i; empty if the centre node itself trades.
inline std::optional<std::pair<double, double>> no_trade_interval(const QviSurface& s, std::size_t i) {
    const std::size_t c = s.grid.center();
    if (!s.no_trade_mask(i, c)) return std::nullopt;
    std::size_t lo = c;
    std::size_t hi = c;
    while (lo > 0 && s.no_trade_mask(i, lo - 1)) --lo;
    while (hi + 1 < s.grid.n_q && s.no_trade_mask(i, hi + 1)) ++hi;
    return std::make_pair(s.grid.q(lo), s.grid.q(hi));
}

namespace qvi_detail {

inline std::size_t time_node(double t, double T, std::size_t n_t) {
    if (!(t >= 0.0 && t <= T * (1.0 + 1e-12))) throw InvalidParams("t outside [0, T]");
    const double x = t / T * static_cast<double>(n_t);
    // Node at or before t; tolerate round-off just below a node.
    auto i = static_cast<std::size_t>(std::floor(x + 1e-9));
    return std::min(i, n_t);
}

/// Impulse from a row of post-trade targets: zero between two no-trade nodes,
/// otherwise the linearly blended target minus q. Outside the grid the
/// boundary node's target is used.
inline double impulse_from_targets(std::span<const double> q_grid, std::span<const double> targets, double q) {
    auto trades = [&](std::size_t j) { return targets[j] != q_grid[j]; };
    if (q <= q_grid.front()) return targets.front() - q;
    if (q >= q_grid.back()) return targets.back() - q;
    const auto it = std::upper_bound(q_grid.begin(), q_grid.end(), q);
    const std::size_t j = static_cast<std::size_t>(it - q_grid.begin()) - 1;
    if (q == q_grid[j]) return trades(j) ? targets[j] - q : 0.0;
    if (!trades(j) && !trades(j + 1)) return 0.0;
    const double w = (q - q_grid[j]) / (q_grid[j + 1] - q_grid[j]);
    return targets[j] + w * (targets[j + 1] - targets[j]) - q;
}

}  // namespace qvi_detail

/// Impulse xi (lots) at (t, q): piecewise constant in t (node at or before t).
inline double qvi_policy(const QviSurface& s, double t, double q) {
    const std::size_t i = qvi_detail::time_node(t, s.T, s.grid.n_t);
    const auto grid = q_nodes(s.grid);
    return qvi_detail::impulse_from_targets(grid, s.impulse_target.row(i), q);
}

inline PolicyFile to_policy_file(const QviSurface& s, nlohmann::json metadata = nlohmann::json::object()) {
    PolicyFile f;
    f.flavor = PolicyFlavor::impulse;
    f.t_grid = t_nodes(s.grid, s.T);
    f.q_grid = q_nodes(s.grid);
    f.actions = s.impulse_target;
    f.metadata = std::move(metadata);
    return f;
}

inline nlohmann::json to_json(const QviSurface& s) {
    nlohmann::json theta = nlohmann::json::array();
    nlohmann::json mask = nlohmann::json::array();
    for (std::size_t i = 0; i < s.theta_tilde.rows(); ++i) {
        const auto r = s.theta_tilde.row(i);
        theta.push_back(std::vector<double>(r.begin(), r.end()));
        const auto m = s.no_trade_mask.row(i);
        mask.push_back(std::vector<int>(m.begin(), m.end()));
    }
    return {{"grid", {{"Q_max", s.grid.Q_max}, {"n_q", s.grid.n_q}, {"n_t", s.grid.n_t}, {"substeps", s.grid.substeps}}},
            {"T", s.T},
            {"t_grid", t_nodes(s.grid, s.T)},
            {"q_grid", q_nodes(s.grid)},
            {"theta_tilde", theta},
            {"no_trade_mask", mask}};
}

}  // namespace flowhedge
