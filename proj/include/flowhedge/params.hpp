#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "flowhedge/error.hpp"

namespace flowhedge {

/// Price and flow dynamics. Units: inventory in lots, prices in $ per lot,
/// time in days.
struct MarketParams {
    double S0 = 500'000.0;
    double q0 = 0.0;
    double X0 = 0.0;
    double sigma = 10'000.0;  ///< arithmetic price volatility, $/lot/sqrt(day)
    double nu = 10.0;         ///< trade-flow standard deviation, lot/sqrt(day)
    double rho = 0.0;         ///< flow/price correlation
    double k = 0.0;           ///< permanent impact, $/lot^2
};

enum class TerminalKind { quadratic, linear, sum };

/// Execution costs L(v) = psi/2 |v| + eta |v|^(1+phi) and terminal penalty l(q).
struct CostParams {
    double psi = 250.0;
    double eta = 5.0;
    double phi = 1.0;
    TerminalKind terminal_kind = TerminalKind::quadratic;
    double K_terminal = 500.0;
};

struct RiskParams {
    double gamma = 2e-6;
    double T = 1.0;
    double dt = 0.01;

    std::size_t n_steps() const { return static_cast<std::size_t>(std::llround(T / dt)); }
};

struct ModelParams {
    MarketParams market;
    CostParams cost;
    RiskParams risk;
};

inline std::string_view to_string(TerminalKind kind) {
    switch (kind) {
        case TerminalKind::quadratic: return "quadratic";
        case TerminalKind::linear: return "linear";
        case TerminalKind::sum: return "sum";
    }
    return "quadratic";
}

inline TerminalKind terminal_kind_from_string(std::string_view name) {
    if (name == "quadratic") return TerminalKind::quadratic;
    if (name == "linear") return TerminalKind::linear;
    if (name == "sum") return TerminalKind::sum;
    throw InvalidParams("unknown terminal_kind '" + std::string(name) + "'");
}

inline void validate(const MarketParams& m) {
    if (!std::isfinite(m.S0) || !std::isfinite(m.q0) || !std::isfinite(m.X0))
        throw InvalidParams("S0, q0 and X0 must be finite");
    // sigma = 0 is accepted so that frozen-dynamics configurations can be run.
    if (!(m.sigma >= 0.0) || !std::isfinite(m.sigma)) throw InvalidParams("sigma must be >= 0");
    if (!(m.nu >= 0.0) || !std::isfinite(m.nu)) throw InvalidParams("nu must be >= 0");
    if (!(m.rho >= -1.0 && m.rho <= 1.0)) throw InvalidParams("rho must lie in [-1, 1]");
    if (!(m.k >= 0.0) || !std::isfinite(m.k)) throw InvalidParams("k must be >= 0");
}

inline void validate(const CostParams& c) {
    if (!(c.psi >= 0.0) || !std::isfinite(c.psi)) throw InvalidParams("psi must be >= 0");
    if (!(c.eta >= 0.0) || !std::isfinite(c.eta)) throw InvalidParams("eta must be >= 0");
    if (!(c.phi > 0.0) || !std::isfinite(c.phi)) throw InvalidParams("phi must be > 0");
    if (c.psi == 0.0 && c.eta == 0.0) throw InvalidParams("psi and eta cannot both be zero");
    if (!(c.K_terminal >= 0.0) || !std::isfinite(c.K_terminal))
        throw InvalidParams("K must be >= 0");
}

inline void validate(const RiskParams& r) {
    if (!(r.gamma >= 0.0) || !std::isfinite(r.gamma)) throw InvalidParams("gamma must be >= 0");
    if (!(r.T > 0.0) || !std::isfinite(r.T)) throw InvalidParams("T must be > 0");
    if (!(r.dt > 0.0 && r.dt <= r.T)) throw InvalidParams("dt must lie in (0, T]");
    const double steps = r.T / r.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * steps)
        throw InvalidParams("T/dt must be a whole number of steps");
}

inline void validate(const ModelParams& p) {
    validate(p.market);
    validate(p.cost);
    validate(p.risk);
}

/// The reduced one-dimensional problems (inventory only) need k = rho = 0.
inline bool is_reduced(const ModelParams& p) { return p.market.k == 0.0 && p.market.rho == 0.0; }

// ---------------------------------------------------------------------------
// JSON configuration. Keys: T, dt, S0, sigma, nu, psi, eta, phi, gamma, K, k,
// rho, q0, X0, terminal_kind. Missing keys keep their defaults.

namespace detail {

inline void read_number(const nlohmann::json& j, const char* key, double& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number()) throw InvalidParams(std::string("config key '") + key + "' must be a number");
    out = v.get<double>();
}

}  // namespace detail

inline void from_json(const nlohmann::json& j, ModelParams& p) {
    if (!j.is_object()) throw InvalidParams("config must be a JSON object");
    detail::read_number(j, "T", p.risk.T);
    detail::read_number(j, "dt", p.risk.dt);
    detail::read_number(j, "gamma", p.risk.gamma);
    detail::read_number(j, "S0", p.market.S0);
    detail::read_number(j, "q0", p.market.q0);
    detail::read_number(j, "X0", p.market.X0);
    detail::read_number(j, "sigma", p.market.sigma);
    detail::read_number(j, "nu", p.market.nu);
    detail::read_number(j, "rho", p.market.rho);
    detail::read_number(j, "k", p.market.k);
    detail::read_number(j, "psi", p.cost.psi);
    detail::read_number(j, "eta", p.cost.eta);
    detail::read_number(j, "phi", p.cost.phi);
    detail::read_number(j, "K", p.cost.K_terminal);
    if (j.contains("terminal_kind")) {
        if (!j.at("terminal_kind").is_string()) throw InvalidParams("terminal_kind must be a string");
        p.cost.terminal_kind = terminal_kind_from_string(j.at("terminal_kind").get<std::string>());
    }
}

inline void to_json(nlohmann::json& j, const ModelParams& p) {
    j = nlohmann::json{{"T", p.risk.T},           {"dt", p.risk.dt},
                       {"S0", p.market.S0},       {"sigma", p.market.sigma},
                       {"nu", p.market.nu},       {"psi", p.cost.psi},
                       {"eta", p.cost.eta},       {"phi", p.cost.phi},
                       {"gamma", p.risk.gamma},   {"K", p.cost.K_terminal},
                       {"k", p.market.k},         {"rho", p.market.rho},
                       {"q0", p.market.q0},       {"X0", p.market.X0},
                       {"terminal_kind", std::string(to_string(p.cost.terminal_kind))}};
}

/// Parses and validates a configuration object, starting from the defaults.
inline ModelParams params_from_json(const nlohmann::json& j, ModelParams base = {}) {
    from_json(j, base);
    validate(base);
    return base;
}

inline ModelParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParams("config '" + path + "': " + e.what());
    }
    return params_from_json(j);
}

enum class Preset { psi_zero, eta_zero, general };

/// Experimental parameter sets for the three cost regimes: purely quadratic
/// costs, purely linear (spread) costs, and both.
inline ModelParams preset(Preset which) {
    ModelParams p;
    switch (which) {
        case Preset::psi_zero:
            p.cost.psi = 0.0;
            p.cost.terminal_kind = TerminalKind::quadratic;
            break;
        case Preset::eta_zero:
            p.cost.eta = 0.0;
            p.cost.terminal_kind = TerminalKind::linear;
            break;
        case Preset::general:
            break;
    }
    return p;
}

}  // namespace flowhedge
