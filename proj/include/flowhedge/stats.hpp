#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "flowhedge/error.hpp"

namespace flowhedge {

struct WelchResult {
    double t_stat = 0.0;
    double dof = 0.0;
    double p_two_sided = 1.0;
    bool degenerate = false;  ///< both samples have zero variance
};

enum class MannWhitneyMethod { automatic, exact, normal };

struct MannWhitneyResult {
    double U = 0.0;  ///< U statistic of the first sample
    double p_two_sided = 1.0;
    MannWhitneyMethod method = MannWhitneyMethod::normal;  ///< method actually used
    bool ties = false;
};

namespace stats_detail {

inline void require_two(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw InvalidParams("each sample needs at least 2 points");
    for (double x : a)
        if (!std::isfinite(x)) throw InvalidParams("sample contains a non-finite value");
    for (double x : b)
        if (!std::isfinite(x)) throw InvalidParams("sample contains a non-finite value");
}

inline double mean(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Unbiased sample variance (two-pass).
inline double variance(std::span<const double> x, double m) {
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

/// Number of orderings of n_a a's and n_b b's whose U statistic for the a's
/// equals u, for u = 0..n_a n_b. Conditioning on the largest element gives
/// c(m, n, u) = c(m-1, n, u-n) + c(m, n-1, u).
inline std::vector<double> u_counts(std::size_t n_a, std::size_t n_b) {
    const std::size_t umax = n_a * n_b;
    std::vector<std::vector<double>> prev(n_b + 1, std::vector<double>(umax + 1, 0.0));
    for (std::size_t n = 0; n <= n_b; ++n) prev[n][0] = 1.0;  // m = 0
    for (std::size_t m = 1; m <= n_a; ++m) {
        std::vector<std::vector<double>> cur(n_b + 1, std::vector<double>(umax + 1, 0.0));
        cur[0][0] = 1.0;
        for (std::size_t n = 1; n <= n_b; ++n)
            for (std::size_t u = 0; u <= m * n; ++u)
                cur[n][u] = (u >= n ? prev[n][u - n] : 0.0) + cur[n - 1][u];
        prev = std::move(cur);
    }
    return prev[n_b];
}

}  // namespace stats_detail

/// Welch's unequal-variance t test with Welch-Satterthwaite degrees of freedom.
inline WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    stats_detail::require_two(a, b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = stats_detail::mean(a);
    const double mb = stats_detail::mean(b);
    const double va = stats_detail::variance(a, ma) / na;
    const double vb = stats_detail::variance(b, mb) / nb;
    const double se2 = va + vb;

    WelchResult r;
    if (se2 == 0.0) {
        r.degenerate = true;
        r.dof = std::numeric_limits<double>::quiet_NaN();
        if (ma == mb) return r;
        r.t_stat = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p_two_sided = 0.0;
        return r;
    }
    r.t_stat = (ma - mb) / std::sqrt(se2);
    r.dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    const boost::math::students_t dist(r.dof);
    r.p_two_sided = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_stat))));
    return r;
}

/// Largest per-sample size for which the automatic method enumerates the
/// exact null distribution (samples without ties only).
inline constexpr std::size_t mann_whitney_exact_limit = 8;

/// Mann-Whitney U test with mid-ranks for ties. The normal approximation
/// carries the tie correction to the variance and a continuity correction.
inline MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                        MannWhitneyMethod method = MannWhitneyMethod::automatic) {
    stats_detail::require_two(a, b);
    const std::size_t na = a.size();
    const std::size_t nb = b.size();
    const std::size_t n = na + nb;

    std::vector<std::pair<double, bool>> pooled;
    pooled.reserve(n);
    for (double x : a) pooled.emplace_back(x, true);
    for (double x : b) pooled.emplace_back(x, false);
    std::sort(pooled.begin(), pooled.end(), [](const auto& l, const auto& r) { return l.first < r.first; });

    double rank_sum_a = 0.0;
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && pooled[j].first == pooled[i].first) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (pooled[k].second) rank_sum_a += mid;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }

    MannWhitneyResult r;
    const double dna = static_cast<double>(na);
    const double dnb = static_cast<double>(nb);
    r.U = rank_sum_a - dna * (dna + 1.0) / 2.0;
    r.ties = tie_term > 0.0;

    if (method == MannWhitneyMethod::automatic)
        method = (!r.ties && na <= mann_whitney_exact_limit && nb <= mann_whitney_exact_limit)
                     ? MannWhitneyMethod::exact
                     : MannWhitneyMethod::normal;
    if (method == MannWhitneyMethod::exact && r.ties)
        throw InvalidParams("exact Mann-Whitney distribution requires samples without ties");
    r.method = method;

    if (method == MannWhitneyMethod::exact) {
        const auto counts = stats_detail::u_counts(na, nb);
        const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
        const auto u = static_cast<std::size_t>(std::llround(r.U));
        double lower = 0.0;
        double upper = 0.0;
        for (std::size_t k = 0; k < counts.size(); ++k) {
            if (k <= u) lower += counts[k];
            if (k >= u) upper += counts[k];
        }
        r.p_two_sided = std::min(1.0, 2.0 * std::min(lower, upper) / total);
        return r;
    }

    const double dn = static_cast<double>(n);
    const double mu = dna * dnb / 2.0;
    const double var = dna * dnb / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
    if (!(var > 0.0)) return r;
    const double z = std::max(0.0, std::abs(r.U - mu) - 0.5) / std::sqrt(var);
    const boost::math::normal_distribution<double> unit;
    r.p_two_sided = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(unit, z)));
    return r;
}

}  // namespace flowhedge
