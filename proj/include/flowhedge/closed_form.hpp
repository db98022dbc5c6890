#pragma once

#include <cmath>

#include "flowhedge/error.hpp"
#include "flowhedge/params.hpp"

namespace flowhedge {

/// Coefficient a(t) of the inventory quadratic form for quadratic costs
/// L(v) = eta v^2, l(q) = K q^2 and k = rho = 0. Solves
/// a' = a^2 / eta - gamma sigma^2 / 2 with a(T) = K.
inline double a_closed(double t, const ModelParams& p) {
    const double eta = p.cost.eta;
    if (!(eta > 0.0)) throw InvalidParams("closed form requires eta > 0");
    const double K = p.cost.K_terminal;
    const double tau = p.risk.T - t;
    const double risk = p.risk.gamma * p.market.sigma * p.market.sigma;
    if (risk == 0.0) return K / (1.0 + K * tau / eta);

    const double c = std::sqrt(risk * eta / 2.0);
    const double rate = std::sqrt(risk / (2.0 * eta));
    const double ratio = (K - c) / (K + c);
    const double e = ratio * std::exp(-2.0 * rate * tau);
    return c * (1.0 + e) / (1.0 - e);
}

/// Optimal speed per lot of inventory, v*(t) / q = -a(t) / eta.
inline double closed_form_slope(double t, const ModelParams& p) { return -a_closed(t, p) / p.cost.eta; }

struct AlphaBeta {
    double alpha = 0.0;
    double beta = 0.0;
};

/// Price-dependent part of the value function when k = rho = 0:
/// theta(t,q,S) = theta_tilde(t,q) - alpha(t) - beta(t) S^2.
inline AlphaBeta alpha_beta(double t, const ModelParams& p) {
    if (t < 0.0 || t > p.risk.T) throw InvalidParams("t outside [0, T]");
    const double tau = p.risk.T - t;
    const double g = p.risk.gamma;
    const double nu2 = p.market.nu * p.market.nu;
    const double s2 = p.market.sigma * p.market.sigma;
    return {0.25 * g * nu2 * s2 * tau * tau, 0.5 * g * nu2 * tau};
}

}  // namespace flowhedge
