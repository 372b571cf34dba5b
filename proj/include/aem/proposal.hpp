#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aem/config.hpp"
#include "aem/tape.hpp"

namespace aem {

inline constexpr double kLogTwoPi = 1.8378770664093453;  // log(2*pi)

// Gaussian-mixture proposal parameters for a batch of conditionals, one
// column per (item, dimension) pair, K rows per field.
struct MixtureParamsV {
    Mat log_coeffs;  // log softmax of the first K raw slots
    Mat locs;        // next K raw slots, unconstrained
    Mat scales;      // scale_min + softplus(last K raw slots)
};

struct MixtureParamsT {
    Var log_coeffs;
    Var locs;
    Var scales;
};

namespace detail {
inline void check_raw_finite(const Mat& phi_raw, int dims_per_row) {
    if (phi_raw.allFinite()) return;
    for (Eigen::Index j = 0; j < phi_raw.cols(); ++j) {
        if (!phi_raw.col(j).allFinite()) {
            std::string where = dims_per_row > 0
                                    ? "batch row " + std::to_string(j / dims_per_row) +
                                          ", dimension " + std::to_string(j % dims_per_row + 1)
                                    : "batch column " + std::to_string(j);
            throw EvalError("proposal: non-finite raw parameters at " + where);
        }
    }
}
}  // namespace detail

// phi_raw: (3K, M) with rows [coefficient logits | locations | raw scales].
inline MixtureParamsV constrain_value(const Mat& phi_raw, int K, double scale_min,
                                      int dims_per_row = 0) {
    if (phi_raw.rows() != 3 * K) throw ConfigError("proposal: raw parameter rows != 3K");
    detail::check_raw_finite(phi_raw, dims_per_row);
    MixtureParamsV p;
    p.log_coeffs = vops::log_softmax_rows(phi_raw.middleRows(0, K));
    p.locs = phi_raw.middleRows(K, K);
    p.scales = (vops::softplus(phi_raw.middleRows(2 * K, K)).array() + scale_min).matrix();
    return p;
}

inline MixtureParamsT constrain(Tape& t, Var phi_raw, int K, double scale_min,
                                int dims_per_row = 0) {
    if (t.val(phi_raw).rows() != 3 * K) throw ConfigError("proposal: raw parameter rows != 3K");
    detail::check_raw_finite(t.val(phi_raw), dims_per_row);
    MixtureParamsT p;
    p.log_coeffs = t.log_softmax_rows(t.slice_rows(phi_raw, 0, K));
    p.locs = t.slice_rows(phi_raw, K, K);
    p.scales = t.add_scalar(t.softplus_(t.slice_rows(phi_raw, 2 * K, K)), scale_min);
    return p;
}

// Per-column mixture log density of x: (1, M) -> (1, M). The value and tape
// versions run the same operation sequence and agree bitwise.
inline Mat mixture_log_prob_value(const MixtureParamsV& p, const Mat& x) {
    const Eigen::Index K = p.locs.rows();
    Mat xr = x.replicate(K, 1);
    Mat z = (xr - p.locs).cwiseQuotient(p.scales);
    Mat logn = z.cwiseProduct(z) * -0.5 - p.scales.array().log().matrix();
    logn = (logn.array() + -0.5 * kLogTwoPi).matrix();
    return vops::logsumexp_rows(p.log_coeffs + logn);
}

inline Var mixture_log_prob(Tape& t, const MixtureParamsT& p, Var x) {
    const Eigen::Index K = t.val(p.locs).rows();
    Var xr = t.replicate_rows(x, K);
    Var z = t.div(t.sub(xr, p.locs), p.scales);
    Var logn = t.sub(t.mul_scalar(t.mul(z, z), -0.5), t.log_(p.scales));
    logn = t.add_scalar(logn, -0.5 * kLogTwoPi);
    return t.logsumexp_rows(t.add(p.log_coeffs, logn));
}

// S draws per column, emitted as (1, M*S) with the S samples of column j at
// columns j*S..j*S+S-1. Draw order is column-major then sample-major; each
// draw consumes one categorical pick and one normal.
inline Mat mixture_sample(const MixtureParamsV& p, Eigen::Index S, Rng& rng) {
    if (S < 1) throw UsageError("proposal sample: count must be positive");
    const Eigen::Index K = p.locs.rows(), M = p.locs.cols();
    Mat out(1, M * S);
    std::vector<double> w(static_cast<std::size_t>(K));
    for (Eigen::Index j = 0; j < M; ++j) {
        for (Eigen::Index k = 0; k < K; ++k) w[static_cast<std::size_t>(k)] = std::exp(p.log_coeffs(k, j));
        for (Eigen::Index s = 0; s < S; ++s) {
            const auto k = static_cast<Eigen::Index>(rng.categorical(w));
            out(0, j * S + s) = rng.normal(p.locs(k, j), p.scales(k, j));
        }
    }
    return out;
}

// Fixed (untrainable) per-dimension uniform proposal.
struct UniformProposal {
    std::vector<double> lo, hi;

    static UniformProposal from_config(const ModelConfig& cfg) {
        if (cfg.uniform_bounds.size() != static_cast<std::size_t>(2 * cfg.dim))
            throw ConfigError("uniform proposal: bounds missing for some dimension");
        UniformProposal u;
        for (int d = 0; d < cfg.dim; ++d) {
            u.lo.push_back(cfg.uniform_bounds[2 * d]);
            u.hi.push_back(cfg.uniform_bounds[2 * d + 1]);
            if (!(u.lo.back() < u.hi.back()))
                throw ConfigError("uniform proposal: lo must be < hi");
        }
        return u;
    }

    double log_prob(int d, double x) const {
        return (x >= lo[d] && x <= hi[d]) ? -std::log(hi[d] - lo[d]) : kNegInf;
    }

    double sample(int d, Rng& rng) const { return rng.uniform(lo[d], hi[d]); }
};

}  // namespace aem
