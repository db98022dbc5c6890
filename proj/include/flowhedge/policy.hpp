#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "flowhedge/closed_form.hpp"
#include "flowhedge/error.hpp"
#include "flowhedge/params.hpp"
#include "flowhedge/policy_file.hpp"
#include "flowhedge/qvi.hpp"
#include "flowhedge/riccati.hpp"

namespace flowhedge {

enum class PolicyKind { closed_form, riccati, grid_speed, grid_impulse, benchmark };

inline std::string_view to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::closed_form: return "closed_form";
        case PolicyKind::riccati: return "riccati";
        case PolicyKind::grid_speed: return "grid_speed";
        case PolicyKind::grid_impulse: return "grid_impulse";
        case PolicyKind::benchmark: return "benchmark";
    }
    return "unknown";
}

struct Action {
    enum class Kind { speed, impulse };
    Kind kind = Kind::speed;
    double value = 0.0;  ///< lot/day for speeds, lots for impulses

    static Action speed(double v) { return {Kind::speed, v}; }
    static Action impulse(double xi) { return {Kind::impulse, xi}; }
};

/// Default speed cap, 10 Q_max / T with the standard inventory bound.
inline constexpr double default_v_max(double Q_max = 40.0, double T = 1.0) { return 10.0 * Q_max / T; }

/// Immutable trading rule (t, q, S) -> Action. Speeds are clamped to
/// |v| <= v_max; impulses are bounded by the grid and left as is.
class Policy {
public:
    struct ClosedForm {
        ModelParams params;
    };
    struct Riccati {
        std::shared_ptr<const RiccatiSolution> solution;
    };
    struct Grid {
        std::shared_ptr<const PolicyFile> file;
    };
    struct Benchmark {
        double threshold = 5.0;
        double speed = 100.0;
    };

    static Policy closed_form(const ModelParams& p, double v_max = default_v_max()) {
        if (!(p.cost.eta > 0.0)) throw InvalidParams("closed-form policy requires eta > 0");
        return Policy(PolicyKind::closed_form, ClosedForm{p}, v_max);
    }

    static Policy riccati(RiccatiSolution sol, double v_max = default_v_max()) {
        return Policy(PolicyKind::riccati, Riccati{std::make_shared<const RiccatiSolution>(std::move(sol))}, v_max);
    }

    static Policy grid(PolicyFile file, double v_max = default_v_max()) {
        validate(file);
        const auto kind = file.flavor == PolicyFlavor::speed ? PolicyKind::grid_speed : PolicyKind::grid_impulse;
        return Policy(kind, Grid{std::make_shared<const PolicyFile>(std::move(file))}, v_max);
    }

    static Policy benchmark(double threshold = 5.0, double speed = 100.0, double v_max = default_v_max()) {
        return Policy(PolicyKind::benchmark, Benchmark{threshold, speed}, v_max);
    }

    PolicyKind kind() const { return kind_; }
    double v_max() const { return v_max_; }

    Action act(double t, double q, double S) const {
        return std::visit([&](const auto& p) { return act_impl(p, t, q, S); }, payload_);
    }

    /// Raw payload access for serialisation.
    template <typename T>
    const T* payload() const { return std::get_if<T>(&payload_); }

private:
    using Payload = std::variant<ClosedForm, Riccati, Grid, Benchmark>;

    Policy(PolicyKind kind, Payload payload, double v_max)
        : kind_(kind), payload_(std::move(payload)), v_max_(v_max) {
        if (!(v_max > 0.0)) throw InvalidParams("v_max must be > 0");
    }

    Action clamp(double v) const { return Action::speed(std::clamp(v, -v_max_, v_max_)); }

    Action act_impl(const ClosedForm& c, double t, double q, double) const {
        const double T = c.params.risk.T;
        return clamp(closed_form_slope(std::clamp(t, 0.0, T), c.params) * q);
    }

    Action act_impl(const Riccati& r, double t, double q, double S) const {
        const double T = r.solution->times.back();
        return clamp(riccati_policy(*r.solution, std::clamp(t, 0.0, T), q, S));
    }

    Action act_impl(const Benchmark& b, double, double q, double) const {
        if (std::abs(q) <= b.threshold) return Action::speed(0.0);
        return clamp(q > 0.0 ? -b.speed : b.speed);
    }

    Action act_impl(const Grid& g, double t, double q, double) const {
        const PolicyFile& f = *g.file;
        const auto row = f.actions.row(time_row(f, t));
        if (f.flavor == PolicyFlavor::impulse)
            return Action::impulse(qvi_detail::impulse_from_targets(f.q_grid, row, q));
        return clamp(interpolate(f.q_grid, row, q));
    }

    /// Last node at or before t (round-off just below a node is absorbed).
    static std::size_t time_row(const PolicyFile& f, double t) {
        const double span = f.t_grid.back() - f.t_grid.front();
        const auto it = std::upper_bound(f.t_grid.begin(), f.t_grid.end(), t + 1e-9 * span);
        if (it == f.t_grid.begin()) return 0;
        return static_cast<std::size_t>(it - f.t_grid.begin()) - 1;
    }

    /// Linear in q, constant beyond the grid, exact at nodes.
    static double interpolate(std::span<const double> grid, std::span<const double> values, double q) {
        if (q <= grid.front()) return values.front();
        if (q >= grid.back()) return values.back();
        const auto it = std::upper_bound(grid.begin(), grid.end(), q);
        const std::size_t j = static_cast<std::size_t>(it - grid.begin()) - 1;
        if (q == grid[j]) return values[j];
        const double w = (q - grid[j]) / (grid[j + 1] - grid[j]);
        return values[j] + w * (values[j + 1] - values[j]);
    }

    PolicyKind kind_;
    Payload payload_;
    double v_max_;
};

/// Policy JSON on disk: a policy grid file ("flavor"), a Riccati solution
/// ("a11"), or a built-in rule ({"builtin": "benchmark" | "closed_form", ...}).
inline Policy policy_from_json(const nlohmann::json& j, double v_max = default_v_max()) {
    if (!j.is_object()) throw FormatError("policy must be a JSON object");
    if (j.contains("flavor")) return Policy::grid(policy_file_from_json(j), v_max);
    if (j.contains("a11")) return Policy::riccati(riccati_from_json(j), v_max);
    if (j.contains("builtin")) {
        try {
            const auto name = j.at("builtin").get<std::string>();
            if (name == "benchmark")
                return Policy::benchmark(j.value("threshold", 5.0), j.value("speed", 100.0), v_max);
            if (name == "closed_form") return Policy::closed_form(params_from_json(j.at("params")), v_max);
            throw FormatError("unknown builtin policy '" + name + "'");
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("builtin policy: ") + e.what());
        }
    }
    throw FormatError("unrecognised policy file (expected \"flavor\", \"a11\" or \"builtin\")");
}

inline nlohmann::json to_json(const Policy& policy) {
    if (const auto* g = policy.payload<Policy::Grid>()) return to_json(*g->file);
    if (const auto* r = policy.payload<Policy::Riccati>()) return to_json(*r->solution);
    if (const auto* b = policy.payload<Policy::Benchmark>())
        return {{"builtin", "benchmark"}, {"threshold", b->threshold}, {"speed", b->speed}};
    const auto* c = policy.payload<Policy::ClosedForm>();
    return {{"builtin", "closed_form"}, {"params", c->params}};
}

inline Policy load_policy(const std::string& path, double v_max = default_v_max()) {
    return policy_from_json(read_json_file(path), v_max);
}

inline void save_policy(const Policy& policy, const std::string& path) { write_json_file(path, to_json(policy)); }

}  // namespace flowhedge
