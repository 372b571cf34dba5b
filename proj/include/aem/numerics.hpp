#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "aem/errors.hpp"

namespace aem {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) without overflow; handles -inf operands.
inline double logaddexp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

// log(sum_i exp(v_i)); returns -inf for empty or all -inf input.
inline double logsumexp(const double* v, std::size_t n) {
    double m = kNegInf;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

inline double logsumexp(const std::vector<double>& v) { return logsumexp(v.data(), v.size()); }

// log(1 + exp(x)) computed from the branch that keeps exp() small.
inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double log_normal_pdf(double x, double mean, double stddev) {
    const double z = (x - mean) / stddev;
    return -0.5 * z * z - std::log(stddev) - 0.5 * std::log(2.0 * M_PI);
}

// p-th percentile (p in [0, 100]) with linear interpolation between order
// statistics; matches the numpy default.
inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) throw UsageError("percentile: empty input");
    if (!(p >= 0.0 && p <= 100.0)) throw UsageError("percentile: p out of [0, 100]");
    std::sort(v.begin(), v.end());
    const double rank = p / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = static_cast<std::size_t>(std::ceil(rank));
    if (lo == hi) return v[lo];
    const double frac = rank - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw UsageError("mean_of: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Unbiased sample variance.
inline double variance_of(const std::vector<double>& v) {
    if (v.size() < 2) throw UsageError("variance_of: need at least two values");
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace aem
