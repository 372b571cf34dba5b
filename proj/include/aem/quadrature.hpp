#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "aem/errors.hpp"
#include "aem/numerics.hpp"
#include "aem/proposal.hpp"
#include "aem/rng.hpp"

namespace aem {

// Trapezoid rule on a uniform grid, computed wholly in the log domain:
// log(dx/2) + logsumexp_i(logaddexp(f_i, f_{i+1})). Safe for integrands whose
// linear-domain values underflow.
inline double log_trapezoid(const double* logf, std::size_t n, double dx) {
    if (n < 2) throw UsageError("log_trapezoid: need at least 2 grid points");
    if (!std::isfinite(dx) || dx <= 0.0) throw UsageError("log_trapezoid: spacing must be positive and finite");
    // Two passes over the panel values logaddexp(f_i, f_{i+1}) instead of
    // materializing them; same arithmetic as logsumexp on the panel vector.
    double m = kNegInf;
    for (std::size_t i = 0; i + 1 < n; ++i) m = std::max(m, logaddexp(logf[i], logf[i + 1]));
    if (m == kNegInf) return kNegInf;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) acc += std::exp(logaddexp(logf[i], logf[i + 1]) - m);
    return std::log(dx / 2.0) + m + std::log(acc);
}

inline double log_trapezoid(const std::vector<double>& logf, double dx) {
    return log_trapezoid(logf.data(), logf.size(), dx);
}

struct QuadratureResult {
    double log_integral = kNegInf;
    std::int64_t grid_points = 0;
    bool converged = false;
    double lower = 0.0;
    double upper = 0.0;
};

// Integration window covering essentially all proposal mass: the union of
// [location - 20 scale, location + 20 scale] over mixture components.
inline std::pair<double, double> mixture_interval(const MixtureParamsV& p) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < p.locs.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.locs.cols(); ++j) {
            lo = std::min(lo, p.locs(i, j) - 20.0 * p.scales(i, j));
            hi = std::max(hi, p.locs(i, j) + 20.0 * p.scales(i, j));
        }
    }
    return {lo, hi};
}

// Refines log_trapezoid by doubling the panel count until two successive
// grids agree to 7 significant figures of the log-integral, starting from 16
// panels. Batched evaluation: log_f fills logf[i] for grid point lo + i*dx.
inline QuadratureResult refine_log_integral(
    const std::function<void(const std::vector<double>& xs, std::vector<double>& logf)>& log_f,
    double lo, double hi, std::int64_t max_points = (std::int64_t{1} << 24)) {
    if (!(hi > lo)) throw UsageError("refine_log_integral: empty interval");
    QuadratureResult res;
    res.lower = lo;
    res.upper = hi;
    std::vector<double> xs, logf;
    double prev = kNegInf;
    bool have_prev = false;
    for (std::int64_t panels = 16;; panels *= 2) {
        const std::int64_t points = panels + 1;
        const double dx = (hi - lo) / static_cast<double>(panels);
        xs.resize(static_cast<std::size_t>(points));
        for (std::int64_t i = 0; i < points; ++i) xs[static_cast<std::size_t>(i)] = lo + static_cast<double>(i) * dx;
        logf.assign(xs.size(), kNegInf);
        log_f(xs, logf);
        const double cur = log_trapezoid(logf.data(), logf.size(), dx);
        res.log_integral = cur;
        res.grid_points = points;
        if (have_prev && std::abs(cur - prev) <= 1e-7 * std::max(1.0, std::abs(cur))) {
            res.converged = true;
            return res;
        }
        prev = cur;
        have_prev = true;
        if (points * 2 - 1 > max_points) return res;
    }
}

// Monte Carlo demonstration of how a fixed-sample importance estimate of a
// normalizing constant degrades with dimension: target N(0, I_D), proposal
// N(0, 1.25^2 I_D), true log Z = 0. Returns one row of trial estimates per
// requested dimension.
struct IsScalingResult {
    std::vector<int> dims;
    std::vector<std::vector<double>> trial_log_z;
};

inline IsScalingResult is_scaling_demo(const std::vector<int>& dims, Rng& rng, int trials = 50,
                                       int samples = 20, double target_sigma = 1.0,
                                       double proposal_sigma = 1.25) {
    for (int d : dims)
        if (d < 1) throw UsageError("is_scaling_demo: dimensions must be positive");
    IsScalingResult out;
    out.dims = dims;
    std::vector<double> logw(static_cast<std::size_t>(samples));
    for (std::size_t di = 0; di < dims.size(); ++di) {
        // Streams keyed by the dimension value, so a dimension's trials do
        // not depend on which other dimensions were requested.
        Rng stream = rng.split(static_cast<std::uint64_t>(dims[di]));
        std::vector<double> vals(static_cast<std::size_t>(trials));
        for (int t = 0; t < trials; ++t) {
            for (int s = 0; s < samples; ++s) {
                double lw = 0.0;
                for (int d = 0; d < dims[di]; ++d) {
                    const double x = proposal_sigma * stream.normal();
                    lw += log_normal_pdf(x, 0.0, target_sigma) - log_normal_pdf(x, 0.0, proposal_sigma);
                }
                logw[static_cast<std::size_t>(s)] = lw;
            }
            vals[static_cast<std::size_t>(t)] =
                logsumexp(logw.data(), logw.size()) - std::log(static_cast<double>(samples));
        }
        out.trial_log_z.push_back(std::move(vals));
    }
    return out;
}

}  // namespace aem
