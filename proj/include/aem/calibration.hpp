#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>
#include <utility>
#include <vector>

#include "aem/config.hpp"
#include "aem/model.hpp"
#include "aem/numerics.hpp"
#include "aem/quadrature.hpp"

namespace aem {

// Ground-truth normalizer for one conditional: integrates exp(neg_energy)
// over the given interval, refining until the log converges. Energy columns
// are filled in bounded chunks so deep refinements stay in memory.
inline QuadratureResult conditional_log_z(const Model& m, const Mat& gamma,
                                          std::pair<double, double> interval,
                                          std::int64_t max_points = (std::int64_t{1} << 24)) {
    if (gamma.rows() != m.config().context_dim || gamma.cols() != 1)
        throw UsageError("conditional_log_z: context must be a single column");
    const Eigen::Index C = gamma.rows();
    return refine_log_integral(
        [&](const std::vector<double>& xs, std::vector<double>& logf) {
            const Eigen::Index total = static_cast<Eigen::Index>(xs.size());
            const Eigen::Index chunk = 8192;
            Mat in(1 + C, std::min(chunk, total));
            for (Eigen::Index at = 0; at < total; at += chunk) {
                const Eigen::Index n = std::min(chunk, total - at);
                in.resize(1 + C, n);
                for (Eigen::Index j = 0; j < n; ++j) {
                    in(0, j) = xs[static_cast<std::size_t>(at + j)];
                    in.col(j).tail(C) = gamma.col(0);
                }
                const Mat ne = m.neg_energy(in);
                for (Eigen::Index j = 0; j < n; ++j)
                    logf[static_cast<std::size_t>(at + j)] = ne(0, j);
            }
        },
        interval.first, interval.second, max_points);
}

// Interval from the conditional's own proposal parameters.
inline QuadratureResult conditional_log_z(const Model& m, const Mat& gamma,
                                          const MixtureParamsV& phi,
                                          std::int64_t max_points = (std::int64_t{1} << 24)) {
    return conditional_log_z(m, gamma, mixture_interval(phi), max_points);
}

// Importance-vs-quadrature comparison over a sampled set of conditionals.
// error is (log Z-hat - log Z) / |log Z|, falling back to the absolute
// difference when |log Z| < 1e-6.
struct CalibrationReport {
    std::vector<int> s_grid;           // ascending
    std::vector<Eigen::Index> rows;    // data row per conditional
    std::vector<Eigen::Index> dims;    // dimension per conditional, always >= 1
    Eigen::VectorXd log_z_true;
    Mat log_z_hat;  // (conditionals, s_grid size)
    Mat error;      // same shape
    int non_converged = 0;

    std::vector<double> errors_at(std::size_t si) const {
        std::vector<double> v(static_cast<std::size_t>(error.rows()));
        for (Eigen::Index i = 0; i < error.rows(); ++i)
            v[static_cast<std::size_t>(i)] = error(i, static_cast<Eigen::Index>(si));
        return v;
    }
    std::vector<double> abs_errors_at(std::size_t si) const {
        std::vector<double> v = errors_at(si);
        for (double& e : v) e = std::abs(e);
        return v;
    }
};

// Draws conditionals (data row, dimension >= 1) with replacement from the
// given points, skipping the first marginal, whose normalizer has no context
// to probe. Each S in the grid reuses the prefix of one 20000-sample stream
// per conditional, so estimates across S are nested, matching how a single
// run's accuracy improves with more samples. rng stream 0 picks the
// conditionals; stream 1 + i drives conditional i.
inline CalibrationReport calibrate(const Model& m, const Mat& x, std::vector<int> s_grid,
                                   Eigen::Index n_conditionals, const Rng& rng,
                                   int threads = 1) {
    const Eigen::Index D = x.rows(), N = x.cols();
    if (D != m.config().dim) throw ConfigError("calibrate: data rows != model dim");
    if (D < 2) throw ConfigError("calibrate: need at least 2 dimensions");
    if (N < 1) throw UsageError("calibrate: no data points");
    if (n_conditionals < 1) throw UsageError("calibrate: need at least one conditional");
    if (s_grid.empty()) throw UsageError("calibrate: empty sample grid");
    std::sort(s_grid.begin(), s_grid.end());
    if (s_grid.front() < 1) throw UsageError("calibrate: sample counts must be positive");

    CalibrationReport rep;
    rep.s_grid = s_grid;
    rep.log_z_true.resize(n_conditionals);
    rep.log_z_hat.resize(n_conditionals, static_cast<Eigen::Index>(s_grid.size()));
    rep.error.resizeLike(rep.log_z_hat);

    Rng pick = rng.split(0);
    for (Eigen::Index i = 0; i < n_conditionals; ++i) {
        rep.rows.push_back(static_cast<Eigen::Index>(pick.uniform_int(static_cast<std::uint64_t>(N))));
        rep.dims.push_back(1 + static_cast<Eigen::Index>(
                                   pick.uniform_int(static_cast<std::uint64_t>(D - 1))));
    }

    const ResMade::ValueOut heads = m.arnn_values(x);
    const int s_max = s_grid.back();
    std::atomic<Eigen::Index> next{0};
    std::atomic<int> failed{0};
    std::mutex err_mu;
    std::exception_ptr first_error;

    auto worker = [&]() {
        try {
            for (;;) {
                const Eigen::Index i = next.fetch_add(1);
                if (i >= n_conditionals) return;
                const Eigen::Index pair = rep.rows[static_cast<std::size_t>(i)] * D +
                                          rep.dims[static_cast<std::size_t>(i)];
                const Mat gamma = heads.gamma.col(pair);
                const int d = static_cast<int>(rep.dims[static_cast<std::size_t>(i)]);

                MixtureParamsV phi;
                std::pair<double, double> interval;
                double uniform_lq = 0.0;
                if (!m.has_uniform_proposal()) {
                    phi = m.constrain_pairs(Mat(heads.phi_raw.col(pair)));
                    interval = mixture_interval(phi);
                } else {
                    // The sampled estimate can only see the proposal's
                    // support, so the quadrature truth integrates exactly
                    // that interval and not a step further.
                    const auto& u = m.uniform_proposal();
                    interval = {u.lo[static_cast<std::size_t>(d)],
                                u.hi[static_cast<std::size_t>(d)]};
                    uniform_lq = -std::log(u.hi[static_cast<std::size_t>(d)] -
                                           u.lo[static_cast<std::size_t>(d)]);
                }

                const QuadratureResult q = conditional_log_z(m, gamma, interval);
                if (!q.converged) failed.fetch_add(1);
                rep.log_z_true(i) = q.log_integral;

                // Nested importance estimates: one stream, cuts at the grid.
                Rng stream = rng.split(1 + static_cast<std::uint64_t>(i));
                double run_max = kNegInf, run_acc = 0.0;
                int drawn = 0;
                std::size_t cut = 0;
                const Eigen::Index C = gamma.rows();
                while (drawn < s_max) {
                    // Chunks never straddle a grid cut, so every prefix
                    // estimate lands exactly at its sample count.
                    const int next_cut = cut < s_grid.size() ? s_grid[cut] : s_max;
                    const int want = std::min(2000, next_cut - drawn);
                    Mat samples;
                    Eigen::VectorXd lq(want);
                    if (!m.has_uniform_proposal()) {
                        samples = mixture_sample(phi, want, stream);
                        MixtureParamsV rep_phi{vops::repeat_each_col(phi.log_coeffs, want),
                                               vops::repeat_each_col(phi.locs, want),
                                               vops::repeat_each_col(phi.scales, want)};
                        const Mat lqm = mixture_log_prob_value(rep_phi, samples);
                        for (int s = 0; s < want; ++s) lq(s) = lqm(0, s);
                    } else {
                        const auto& u = m.uniform_proposal();
                        samples.resize(1, want);
                        for (int s = 0; s < want; ++s) {
                            samples(0, s) = u.sample(d, stream);
                            lq(s) = uniform_lq;
                        }
                    }
                    Mat in(1 + C, want);
                    in.row(0) = samples;
                    for (int s = 0; s < want; ++s) in.col(s).tail(C) = gamma.col(0);
                    const Mat ne = m.neg_energy(in);
                    for (int s = 0; s < want; ++s) {
                        const double term = ne(0, s) - lq(s);
                        if (term > run_max) {
                            run_acc = run_acc * std::exp(run_max - term) + 1.0;
                            run_max = term;
                        } else {
                            run_acc += std::exp(term - run_max);
                        }
                    }
                    drawn += want;
                    while (cut < s_grid.size() && s_grid[cut] == drawn) {
                        rep.log_z_hat(i, static_cast<Eigen::Index>(cut)) =
                            run_max + std::log(run_acc) - std::log(static_cast<double>(drawn));
                        ++cut;
                    }
                }
                for (std::size_t si = 0; si < s_grid.size(); ++si) {
                    const double lz = rep.log_z_true(i);
                    const double diff = rep.log_z_hat(i, static_cast<Eigen::Index>(si)) - lz;
                    rep.error(i, static_cast<Eigen::Index>(si)) =
                        std::abs(lz) < 1e-6 ? diff : diff / std::abs(lz);
                }
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mu);
            if (!first_error) first_error = std::current_exception();
            next.store(n_conditionals);
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    rep.non_converged = failed.load();
    if (100 * rep.non_converged > n_conditionals)
        throw EvalError("calibrate: " + std::to_string(rep.non_converged) + " of " +
                        std::to_string(n_conditionals) + " conditionals did not converge");
    return rep;
}

inline void write_calibration_csv(std::ostream& os, const CalibrationReport& rep) {
    os << "S,p5,median,p95\n";
    for (std::size_t si = 0; si < rep.s_grid.size(); ++si) {
        const std::vector<double> errs = rep.errors_at(si);
        os << rep.s_grid[si] << ',' << detail::format_double(percentile(errs, 5.0)) << ','
           << detail::format_double(percentile(errs, 50.0)) << ','
           << detail::format_double(percentile(errs, 95.0)) << '\n';
    }
}

inline void write_is_demo_csv(std::ostream& os, const IsScalingResult& demo) {
    os << "dim,trial,log_z_hat\n";
    for (std::size_t di = 0; di < demo.dims.size(); ++di)
        for (std::size_t t = 0; t < demo.trial_log_z[di].size(); ++t)
            os << demo.dims[di] << ',' << t << ','
               << detail::format_double(demo.trial_log_z[di][t]) << '\n';
}

}  // namespace aem
