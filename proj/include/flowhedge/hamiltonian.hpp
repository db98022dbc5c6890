#pragma once

#include <cmath>

#include "flowhedge/core_model.hpp"
#include "flowhedge/error.hpp"
#include "flowhedge/params.hpp"

namespace flowhedge {

/// Legendre transform H(p) = sup_v (v p - L(v)) of the execution cost, with
/// its maximiser H'(p). Requires eta > 0.
class Hamiltonian {
public:
    explicit Hamiltonian(const CostParams& cost) : cost_(cost) {
        if (!(cost.eta > 0.0)) throw InvalidParams("Hamiltonian requires eta > 0");
    }

    /// Optimal speed for marginal value p; zero on the no-trade band |p| <= psi/2.
    double prime(double p) const {
        const double excess = std::abs(p) - 0.5 * cost_.psi;
        if (!(excess > 0.0)) return 0.0;
        const double base = excess / (cost_.eta * (1.0 + cost_.phi));
        const double mag = cost_.phi == 1.0 ? base : std::pow(base, 1.0 / cost_.phi);
        return p > 0.0 ? mag : -mag;
    }

    double operator()(double p) const {
        const double v = prime(p);
        return v * p - exec_cost(v, cost_);
    }

    const CostParams& cost() const { return cost_; }

private:
    CostParams cost_;
};

inline double hamiltonian(double p, const CostParams& cost) { return Hamiltonian(cost)(p); }
inline double hamiltonian_prime(double p, const CostParams& cost) { return Hamiltonian(cost).prime(p); }

}  // namespace flowhedge
