#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace flowhedge {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of the independent stream used by episode `index` of a run seeded
/// with `seed`.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

struct Shock {
    double dB = 0.0;  ///< flow increment
    double dW = 0.0;  ///< price increment
};

/// Correlated Brownian increments over a step of length dt:
/// dW = sqrt(dt) Z1, dB = sqrt(dt) (rho Z1 + sqrt(1 - rho^2) Z2).
class ShockStream {
public:
    ShockStream(std::uint64_t seed, std::uint64_t index) : engine_(stream_seed(seed, index)) {}

    Shock next(double dt, double rho) {
        const double z1 = normal_(engine_);
        const double z2 = normal_(engine_);
        const double sq = std::sqrt(dt);
        return {sq * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2), sq * z1};
    }

    double standard_normal() { return normal_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace flowhedge
