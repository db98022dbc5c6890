#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowhedge/closed_form.hpp"
#include "flowhedge/core_model.hpp"
#include "flowhedge/error.hpp"
#include "flowhedge/grid.hpp"
#include "flowhedge/hamiltonian.hpp"
#include "flowhedge/params.hpp"
#include "flowhedge/policy_file.hpp"

namespace flowhedge {

enum class BoundaryCondition {
    automatic,      ///< spread_neumann when psi > 0, extrapolate otherwise
    spread_neumann, ///< d theta / dq (+-Q_max) = -+ psi / 2
    extrapolate,    ///< boundary slope extrapolated linearly (d2 theta / dq2 constant)
};

struct HjbOptions {
    BoundaryCondition boundary = BoundaryCondition::automatic;
    double tolerance = 1e-10;       ///< policy iteration stop, sup-norm relative to max(1, |theta|)
    std::size_t max_iterations = 50;
    /// Called with every assembled linear system (test hook).
    std::function<void(const TridiagonalSystem&)> on_assemble;
};

/// theta_tilde(t_i, q_j) on the grid, plus alpha(t_i), beta(t_i).
struct ValueSurface {
    GridSpec grid;
    double T = 1.0;
    Table<double> theta_tilde;
    std::vector<double> alpha;
    std::vector<double> beta;
};

/// Optimal speed v*(t_i, q_j) in lot/day.
struct PolicyGrid {
    GridSpec grid;
    double T = 1.0;
    Table<double> action;
    Table<unsigned char> no_trade;
};

namespace hjb_detail {

inline BoundaryCondition resolve(BoundaryCondition bc, const CostParams& cost) {
    if (bc != BoundaryCondition::automatic) return bc;
    return cost.psi > 0.0 ? BoundaryCondition::spread_neumann : BoundaryCondition::extrapolate;
}

struct BoundarySlopes {
    double left;
    double right;
};

inline BoundarySlopes boundary_slopes(BoundaryCondition bc, const CostParams& cost,
                                      std::span<const double> theta, double dq) {
    if (bc == BoundaryCondition::spread_neumann) return {0.5 * cost.psi, -0.5 * cost.psi};
    const std::size_t n = theta.size();
    const double l1 = (theta[1] - theta[0]) / dq;
    const double l2 = (theta[2] - theta[1]) / dq;
    const double r1 = (theta[n - 1] - theta[n - 2]) / dq;
    const double r2 = (theta[n - 2] - theta[n - 3]) / dq;
    return {1.5 * l1 - 0.5 * l2, 1.5 * r1 - 0.5 * r2};
}

/// Finite differences at one node (ghost values already substituted at the edges).
struct Stencil {
    double forward;   ///< (theta_{j+1} - theta_j) / dq
    double backward;  ///< (theta_j - theta_{j-1}) / dq
    double central() const { return 0.5 * (forward + backward); }
};

/// Control at one node maximising the discrete Hamiltonian
///   D_eff(v) D2 theta + v Dc theta - L(v) - nu^2/2 D2 theta,
/// D_eff(v) = max(nu^2/2, |v| dq / 2). For |v| <= v_c = nu^2/dq this is the
/// central difference; beyond it reduces to v Df - L(v) (buying) or
/// v Db - L(v) (selling). Every branch is concave in v, so the clamped
/// stationary points are the exact maximisers.
inline double choose_control(const Hamiltonian& H, const Stencil& d, double v_c, double diffusion_gain) {
    const auto& cost = H.cost();
    const double v_mid = std::clamp(H.prime(d.central()), -v_c, v_c);
    double best_v = v_mid;
    double best = v_mid * d.central() - exec_cost(v_mid, cost);
    const double v_buy = H.prime(d.forward);
    if (v_buy > v_c) {
        const double gain = v_buy * d.forward - exec_cost(v_buy, cost) - diffusion_gain;
        if (gain > best) {
            best = gain;
            best_v = v_buy;
        }
    }
    const double v_sell = H.prime(d.backward);
    if (v_sell < -v_c) {
        const double gain = v_sell * d.backward - exec_cost(v_sell, cost) - diffusion_gain;
        if (gain > best) best_v = v_sell;
    }
    return best_v;
}

}  // namespace hjb_detail

/// Backward implicit Euler step of
///   0 = theta_t + nu^2/2 theta_qq - gamma/2 sigma^2 q^2 + H(theta_q)
/// solved by policy iteration: freeze the control, solve the linear
/// tridiagonal M-matrix system, update the control, repeat. The drift is
/// centred; where |v| dq > nu^2 the diffusion is raised to |v| dq / 2, the
/// least that keeps the system monotone.
class HjbStepper {
public:
    HjbStepper(const ModelParams& p, const GridSpec& g, const HjbOptions& opt)
        : params_(p), grid_(g), opt_(opt), H_(p.cost),
          bc_(hjb_detail::resolve(opt.boundary, p.cost)) {
        if (bc_ == BoundaryCondition::extrapolate && g.n_q < 3)
            throw InvalidParams("extrapolated boundary needs n_q >= 3");
        const double risk = 0.5 * p.risk.gamma * p.market.sigma * p.market.sigma;
        source_.resize(g.n_q);
        for (std::size_t j = 0; j < g.n_q; ++j) source_[j] = -risk * g.q(j) * g.q(j);
    }

    /// Advances theta from t + h back to t. `step` is used for error reporting.
    std::vector<double> advance(const std::vector<double>& next, double h, std::size_t step) const {
        const std::size_t n = grid_.n_q;
        const double dq = grid_.dq();
        const double nu2 = params_.market.nu * params_.market.nu;
        const double v_c = nu2 / dq;

        // Extrapolated boundary slopes are lagged to the known time level.
        const auto slopes = hjb_detail::boundary_slopes(bc_, params_.cost, next, dq);
        std::vector<double> theta = next;
        std::vector<double> speed(n, 0.0);
        for (std::size_t it = 0; it < opt_.max_iterations; ++it) {
            for (std::size_t j = 0; j < n; ++j) {
                // Ghosts: theta_{-1} = theta_1 - 2 dq g_left, theta_n = theta_{n-2} + 2 dq g_right.
                const double prev = j > 0 ? theta[j - 1] : theta[1] - 2.0 * dq * slopes.left;
                const double succ = j + 1 < n ? theta[j + 1] : theta[n - 2] + 2.0 * dq * slopes.right;
                const hjb_detail::Stencil d{(succ - theta[j]) / dq, (theta[j] - prev) / dq};
                const double second = (succ - 2.0 * theta[j] + prev) / (dq * dq);
                speed[j] = hjb_detail::choose_control(H_, d, v_c, 0.5 * nu2 * second);
            }

            // Row j: theta_j - h (D_eff D2 theta + v Dc theta) = next_j + h (source_j - L(v_j)),
            // stored as diag theta_j + lower theta_{j-1} + upper theta_{j+1} = rhs.
            TridiagonalSystem sys(n);
            for (std::size_t j = 0; j < n; ++j) {
                const double v = speed[j];
                const double d_eff = std::max(0.5 * nu2, 0.5 * std::abs(v) * dq) / (dq * dq);
                double lower = d_eff - 0.5 * v / dq;
                double upper = d_eff + 0.5 * v / dq;
                double rhs = next[j] + h * (source_[j] - exec_cost(v, params_.cost));
                if (j == 0) {
                    upper += lower;
                    rhs -= h * lower * 2.0 * dq * slopes.left;
                    lower = 0.0;
                }
                if (j + 1 == n) {
                    lower += upper;
                    rhs += h * upper * 2.0 * dq * slopes.right;
                    upper = 0.0;
                }
                sys.diag[j] = 1.0 + h * 2.0 * d_eff;
                sys.lower[j] = -h * lower;
                sys.upper[j] = -h * upper;
                sys.rhs[j] = rhs;
            }
            if (opt_.on_assemble) opt_.on_assemble(sys);

            std::vector<double> updated = sys.solve();
            double change = 0.0;
            double scale = 1.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (!std::isfinite(updated[j])) throw ConvergenceError("HJB solve produced a non-finite value", step);
                change = std::max(change, std::abs(updated[j] - theta[j]));
                scale = std::max(scale, std::abs(updated[j]));
            }
            theta = std::move(updated);
            if (it > 0 && change <= opt_.tolerance * scale) return theta;
        }
        throw ConvergenceError("HJB policy iteration did not converge", step);
    }

    BoundaryCondition boundary() const { return bc_; }

private:
    ModelParams params_;
    GridSpec grid_;
    HjbOptions opt_;
    Hamiltonian H_;
    BoundaryCondition bc_;
    std::vector<double> source_;
};

/// Speed grid from a value surface: central differences inside, one-sided at
/// the edges, mapped through H'.
inline PolicyGrid policy_from_surface(const ValueSurface& surface, const CostParams& cost) {
    const Hamiltonian H(cost);
    const auto& g = surface.grid;
    const std::size_t n = g.n_q;
    const double dq = g.dq();
    PolicyGrid out{g, surface.T, Table<double>(g.n_t + 1, n), Table<unsigned char>(g.n_t + 1, n)};
    for (std::size_t i = 0; i <= g.n_t; ++i) {
        const auto th = surface.theta_tilde.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            double grad;
            if (j == 0)
                grad = (th[1] - th[0]) / dq;
            else if (j + 1 == n)
                grad = (th[n - 1] - th[n - 2]) / dq;
            else
                grad = (th[j + 1] - th[j - 1]) / (2.0 * dq);
            const double v = H.prime(grad);
            out.action(i, j) = v;
            out.no_trade(i, j) = v == 0.0;
        }
    }
    return out;
}

/// Solves the reduced inventory-only HJB equation (k = rho = 0) backward from
/// theta_tilde(T, q) = -l(q).
inline std::pair<ValueSurface, PolicyGrid> solve_hjb(const ModelParams& p, const GridSpec& g,
                                                      const HjbOptions& opt = {}) {
    validate(p);
    validate(g);
    if (!is_reduced(p)) throw InvalidParams("HJB solver requires k = 0 and rho = 0");
    if (!(p.cost.eta > 0.0)) throw InvalidParams("HJB solver requires eta > 0");

    const double T = p.risk.T;
    const HjbStepper stepper(p, g, opt);
    ValueSurface surface{g, T, Table<double>(g.n_t + 1, g.n_q), {}, {}};
    const auto times = t_nodes(g, T);
    for (double t : times) {
        const auto ab = alpha_beta(t, p);
        surface.alpha.push_back(ab.alpha);
        surface.beta.push_back(ab.beta);
    }

    std::vector<double> theta(g.n_q);
    for (std::size_t j = 0; j < g.n_q; ++j) theta[j] = -terminal_cost(g.q(j), p.cost);
    std::copy(theta.begin(), theta.end(), surface.theta_tilde.row(g.n_t).begin());

    const double h = T / static_cast<double>(g.n_t * g.substeps);
    for (std::size_t i = g.n_t; i-- > 0;) {
        for (std::size_t s = 0; s < g.substeps; ++s) theta = stepper.advance(theta, h, i);
        std::copy(theta.begin(), theta.end(), surface.theta_tilde.row(i).begin());
    }
    auto policy = policy_from_surface(surface, p.cost);
    return {std::move(surface), std::move(policy)};
}

inline nlohmann::json to_json(const ValueSurface& s) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < s.theta_tilde.rows(); ++i) {
        const auto r = s.theta_tilde.row(i);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"grid", {{"Q_max", s.grid.Q_max}, {"n_q", s.grid.n_q}, {"n_t", s.grid.n_t}, {"substeps", s.grid.substeps}}},
            {"T", s.T},
            {"t_grid", t_nodes(s.grid, s.T)},
            {"q_grid", q_nodes(s.grid)},
            {"theta_tilde", rows},
            {"alpha", s.alpha},
            {"beta", s.beta}};
}

inline PolicyFile to_policy_file(const PolicyGrid& pg, nlohmann::json metadata = nlohmann::json::object()) {
    PolicyFile f;
    f.flavor = PolicyFlavor::speed;
    f.t_grid = t_nodes(pg.grid, pg.T);
    f.q_grid = q_nodes(pg.grid);
    f.actions = pg.action;
    f.metadata = std::move(metadata);
    return f;
}

}  // namespace flowhedge
