#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowhedge/error.hpp"
#include "flowhedge/policy.hpp"
#include "flowhedge/simulator.hpp"

namespace flowhedge {

struct EvaluateOptions {
    std::size_t threads = 1;
    bool include_state_only = true;
    bool record = false;
};

/// Monte Carlo evaluation over n_episodes; episode i uses the shock stream
/// (seed, i), so results do not depend on the thread count and two policies
/// run with the same seed see the same shocks.
inline std::vector<EpisodeResult> evaluate(const Policy& policy, const ModelParams& p, std::size_t n_episodes,
                                           std::uint64_t seed, const EvaluateOptions& opt = {}) {
    if (n_episodes < 1) throw InvalidParams("n_episodes must be >= 1");
    validate(p);
    std::vector<EpisodeResult> out(n_episodes);
    EpisodeOptions ep;
    ep.include_state_only = opt.include_state_only;
    ep.record = opt.record;

    const std::size_t workers = std::clamp<std::size_t>(opt.threads, 1, n_episodes);
    if (workers == 1) {
        for (std::size_t i = 0; i < n_episodes; ++i) out[i] = run_episode(policy, p, seed, i, ep);
        return out;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        try {
            for (std::size_t i = next++; i < n_episodes; i = next++) out[i] = run_episode(policy, p, seed, i, ep);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n_episodes;
        }
    };
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    pool.clear();
    if (failure) std::rethrow_exception(failure);
    return out;
}

inline std::vector<double> total_rewards(std::span<const EpisodeResult> results) {
    std::vector<double> out;
    out.reserve(results.size());
    for (const auto& r : results) out.push_back(r.total_reward);
    return out;
}

inline constexpr std::array<double, 7> summary_levels{0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99};

struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;  ///< sample standard deviation (n - 1)
    double min = 0.0;
    double max = 0.0;
    std::array<double, 7> quantiles{};  ///< at summary_levels
};

/// Linear interpolation between order statistics at h = (n - 1) level.
inline double quantile_sorted(std::span<const double> sorted, double level) {
    if (sorted.empty()) throw InvalidParams("quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * level;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Summary summarize(std::span<const double> values) {
    if (values.empty()) throw InvalidParams("cannot summarise an empty sample");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    Summary s;
    s.n = sorted.size();
    double sum = 0.0;
    for (double v : sorted) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : sorted) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    s.min = sorted.front();
    s.max = sorted.back();
    for (std::size_t i = 0; i < summary_levels.size(); ++i) s.quantiles[i] = quantile_sorted(sorted, summary_levels[i]);
    return s;
}

inline Summary summarize(std::span<const EpisodeResult> results) { return summarize(total_rewards(results)); }

inline nlohmann::json to_json(const Summary& s) {
    nlohmann::json q = nlohmann::json::object();
    for (std::size_t i = 0; i < summary_levels.size(); ++i) {
        char key[8];
        std::snprintf(key, sizeof key, "p%02d", static_cast<int>(std::lround(summary_levels[i] * 100)));
        q[key] = s.quantiles[i];
    }
    return {{"n", s.n}, {"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}, {"quantiles", q}};
}

struct Kde {
    double bandwidth = 0.0;
    std::vector<double> x;
    std::vector<double> density;
};

/// Silverman's rule 0.9 min(sd, IQR / 1.34) n^(-1/5), falling back to
/// whichever spread is positive, and to a small absolute width for a
/// constant sample.
inline double silverman_bandwidth(std::span<const double> values) {
    const Summary s = summarize(values);
    const double iqr = (s.quantiles[4] - s.quantiles[2]) / 1.34;
    double spread = std::min(s.std, iqr);
    if (!(spread > 0.0)) spread = std::max(s.std, iqr);
    if (!(spread > 0.0)) spread = 1e-6 * std::max(1.0, std::abs(s.mean));
    return 0.9 * spread * std::pow(static_cast<double>(s.n), -0.2);
}

/// Gaussian-kernel density on `points` equally spaced nodes covering
/// [min - 3h, max + 3h].
inline Kde gaussian_kde(std::span<const double> values, std::size_t points = 512) {
    if (points < 2) throw InvalidParams("KDE needs at least 2 points");
    Kde k;
    k.bandwidth = silverman_bandwidth(values);
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it - 3.0 * k.bandwidth;
    const double hi = *hi_it + 3.0 * k.bandwidth;
    const double norm = 1.0 / (static_cast<double>(values.size()) * k.bandwidth * std::sqrt(2.0 * std::numbers::pi));
    k.x.resize(points);
    k.density.resize(points);
    for (std::size_t i = 0; i < points; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        double acc = 0.0;
        for (double v : values) {
            const double z = (x - v) / k.bandwidth;
            acc += std::exp(-0.5 * z * z);
        }
        k.x[i] = x;
        k.density[i] = acc * norm;
    }
    return k;
}

/// Path of the JSON sidecar written next to a reward CSV: <stem>.stats.json.
inline std::filesystem::path stats_sidecar_path(const std::filesystem::path& csv) {
    auto p = csv;
    p.replace_extension(".stats.json");
    return p;
}

inline void write_rewards_csv(std::span<const double> rewards, const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    std::fputs("total_reward\n", f);
    for (double r : rewards) std::fprintf(f, "%.17g\n", r);
    if (std::fclose(f) != 0) throw Error("failed writing " + path.string());
}

inline std::vector<double> read_rewards_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 12) != "total_reward")
        throw FormatError(path.string() + ": expected header 'total_reward'");
    std::vector<double> out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(line, &used);
        } catch (const std::exception&) {
            throw FormatError(path.string() + ": row " + std::to_string(row) + " is not a number");
        }
        if (line.find_first_not_of(" \r", used) != std::string::npos || !std::isfinite(v))
            throw FormatError(path.string() + ": row " + std::to_string(row) + " is not a finite number");
        out.push_back(v);
    }
    if (out.empty()) throw FormatError(path.string() + ": no rewards");
    return out;
}

/// Writes one reward per row to `path` and summary statistics plus a
/// 512-point KDE to the sidecar.
inline void export_distribution(std::span<const double> rewards, const std::filesystem::path& path,
                                nlohmann::json metadata = nlohmann::json::object()) {
    write_rewards_csv(rewards, path);
    const Kde kde = gaussian_kde(rewards);
    nlohmann::json j = {{"summary", to_json(summarize(rewards))},
                        {"kde", {{"kernel", "gaussian"}, {"bandwidth", kde.bandwidth}, {"x", kde.x}, {"density", kde.density}}},
                        {"metadata", std::move(metadata)}};
    write_json_file(stats_sidecar_path(path).string(), j);
}

inline void export_distribution(std::span<const EpisodeResult> results, const std::filesystem::path& path,
                                nlohmann::json metadata = nlohmann::json::object()) {
    export_distribution(total_rewards(results), path, std::move(metadata));
}

/// (mean_b - mean_a) / |mean_a|, with a as the reference policy.
inline double relative_difference(double mean_a, double mean_b) {
    if (mean_a == 0.0) throw InvalidParams("reference mean is zero");
    return (mean_b - mean_a) / std::abs(mean_a);
}

}  // namespace flowhedge
