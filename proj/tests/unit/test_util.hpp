#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ccodec/nn.hpp"

namespace test_util {

inline std::vector<float> random_signal(std::size_t n, std::uint64_t seed, float scale = 0.5f) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, scale);
    std::vector<float> x(n);
    for (auto& v : x) v = std::clamp(dist(rng), -1.0f, 1.0f);
    return x;
}

template <class T>
ccodec::nn::FeatureMap<T> random_map(int c, int t, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    ccodec::nn::FeatureMap<T> m(c, t);
    for (auto& v : m.data) v = static_cast<T>(dist(rng));
    return m;
}

// Max over probed coordinates of |analytic - numeric| / max(|analytic|, |numeric|, floor).
// Central differences at float64; `loss` must be a pure function of `x`.
inline double fd_check(std::vector<double>& x, const std::vector<double>& analytic,
                       const std::function<double()>& loss, const std::vector<std::size_t>& probes, double h = 1e-5,
                       double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i : probes) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = loss();
        x[i] = keep - h;
        const double down = loss();
        x[i] = keep;
        const double numeric = (up - down) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count && n > 0; ++i) out.push_back(pick(rng));
    return out;
}

} // namespace test_util
