#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include "flowhedge/core_model.hpp"
#include "flowhedge/error.hpp"
#include "flowhedge/params.hpp"
#include "flowhedge/policy.hpp"
#include "flowhedge/rng.hpp"

namespace flowhedge {

/// Number of dt steps from t0 to T; t0 must sit on the dt lattice.
inline std::size_t steps_from(double t0, const ModelParams& p) {
    if (!(t0 >= 0.0 && t0 < p.risk.T)) throw InvalidParams("t0 must lie in [0, T)");
    const double x = (p.risk.T - t0) / p.risk.dt;
    const double n = std::round(x);
    if (std::abs(x - n) > 1e-9 * std::max(1.0, x)) throw InvalidParams("T - t0 must be a multiple of dt");
    return static_cast<std::size_t>(n);
}

struct EpisodeOptions {
    double t0 = 0.0;
    std::optional<double> q0;  ///< overrides the configured initial inventory
    bool include_state_only = true;
    bool record = false;
};

/// One simulated episode driven one control at a time. Episode `index` of a
/// run seeded with `seed` always sees the same shocks, whatever the controls.
class Episode {
public:
    Episode(const ModelParams& p, std::uint64_t seed, std::uint64_t index, const EpisodeOptions& opt = {})
        : p_(p), opt_(opt), shocks_(seed, index), n_steps_(steps_from(opt.t0, p)) {
        state_ = initial_state(p, opt.t0);
        if (opt.q0) state_.q = *opt.q0;
        start_ = state_;
        if (opt.record) result_.trajectory.emplace().reserve(n_steps_ + 1);
    }

    const ModelParams& params() const { return p_; }
    const MarketState& state() const { return state_; }
    std::size_t steps_taken() const { return n_; }
    std::size_t n_steps() const { return n_steps_; }
    bool done() const { return n_ == n_steps_; }

    /// Applies speed v over the next dt and returns the step reward; the last
    /// step also carries the terminal reward.
    double step(double v) { return advance(0.0, v); }

    /// Applies a policy action. An impulse is executed as a block trade at the
    /// current time, after which the step runs at zero speed.
    double step(const Action& a) {
        return a.kind == Action::Kind::impulse ? advance(a.value, 0.0) : advance(0.0, a.value);
    }

    /// Totals of a finished episode.
    EpisodeResult result() const {
        if (!done()) throw Error("episode is not finished");
        EpisodeResult r = result_;
        const double tail = -0.5 * p_.market.k * state_.q * state_.q - terminal_cost(state_.q, p_.cost);
        r.pnl_cash = state_.X + state_.q * state_.S + tail;
        r.pnl_ito = start_.X + start_.q * start_.S + drift_ + flow_ + price_ + tail;
        if (r.trajectory) r.trajectory->push_back({state_.t, state_.q, state_.S, state_.X, 0.0, 0.0, 0.0, 0.0});
        return r;
    }

private:
    double advance(double xi, double v) {
        if (done()) throw Error("episode is already finished");
        if (!std::isfinite(v) || !std::isfinite(xi)) throw InvalidParams("control must be finite");
        const double dt = p_.risk.dt;
        const auto& m = p_.market;
        const Shock z = shocks_.next(dt, m.rho);
        if (result_.trajectory)
            result_.trajectory->push_back({state_.t, state_.q, state_.S, state_.X, xi, v, z.dB, z.dW});

        double reward = 0.0;
        MarketState s = state_;
        if (xi != 0.0) {
            reward += impulse_reward(s.q, xi, p_);
            drift_ += -impulse_cost(xi, p_.cost, dt) + m.k * xi * (s.q + xi);
            s = apply_impulse(s, xi, p_);
        }
        reward += running_reward(s, v, p_, opt_.include_state_only) * dt;
        drift_ += (-exec_cost(v, p_.cost) + m.k * v * s.q + m.rho * m.nu * m.sigma) * dt;
        flow_ += m.nu * s.S * z.dB;
        price_ += m.sigma * s.q * z.dW;

        MarketState next = flowhedge::step(s, v, z.dB, z.dW, p_);
        ++n_;
        next.t = opt_.t0 + static_cast<double>(n_) * dt;
        state_ = next;
        if (done()) reward += terminal_reward(state_.q, state_.S, p_);
        result_.total_reward += reward;
        return reward;
    }

    ModelParams p_;
    EpisodeOptions opt_;
    ShockStream shocks_;
    std::size_t n_steps_;
    std::size_t n_ = 0;
    MarketState state_;
    MarketState start_;
    EpisodeResult result_;
    double drift_ = 0.0;
    double flow_ = 0.0;
    double price_ = 0.0;
};

/// Runs a whole episode under `policy`.
inline EpisodeResult run_episode(const Policy& policy, const ModelParams& p, std::uint64_t seed, std::uint64_t index,
                                 const EpisodeOptions& opt = {}) {
    Episode ep(p, seed, index, opt);
    while (!ep.done()) {
        const auto& s = ep.state();
        ep.step(policy.act(s.t, s.q, s.S));
    }
    return ep.result();
}

}  // namespace flowhedge
