#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "aem/energy_net.hpp"
#include "aem/numerics.hpp"
#include "aem/proposal.hpp"
#include "aem/resmade.hpp"

namespace aem {

// Per-row density estimates from importance-sampled normalizers.
struct LogProbEstimate {
    Eigen::VectorXd log_p_hat;  // per row: sum_d(neg-energy - log-Z-hat)
    Eigen::VectorXd log_q;      // per row: proposal log density, summed over dims
    Mat log_z_hat;              // (D, N) per-conditional normalizer estimates
    int samples = 0;
};

// One training step's graph plus value-domain diagnostics. log_p_item is
// invalid during warm-up (the term is absent from the loss).
struct ObjectiveResult {
    Var loss;        // 1x1
    Var log_p_item;  // (1, N)
    Var log_q_item;  // (1, N)
    double mean_log_p = 0.0;
    double mean_log_q = 0.0;
};

struct KdeConfig {
    double bandwidth = 0.1;  // kernel standard deviation
    double alpha = 0.05;     // proposal mixture weight in [0, 1]
    int samples = 20000;     // proposal draws per conditional
};

// Importance samples and their proposal log densities for one batch, as the
// objective's log-p-hat term sees them: fixed numbers. Recording and
// re-injecting them lets a finite-difference harness probe the loss at
// perturbed parameters without the draws moving.
struct SampleSet {
    Mat samples;  // (1, N*D*S)
    Mat log_q;    // (1, N*D*S)
};

// Autoregressive density model: a masked residual network emits per-dimension
// proposal parameters and energy contexts, and a shared energy net scores
// (value, context) pairs. Densities are products of per-dimension energy
// conditionals whose normalizers are estimated by importance sampling against
// the proposal.
class Model {
public:
    Model(const ModelConfig& cfg, ParameterStore& store, Rng& init_rng)
        : cfg_(cfg), store_(store), arnn_(cfg, store, init_rng), enn_(cfg, store, init_rng) {
        if (cfg_.proposal_kind == "uniform") uniform_ = UniformProposal::from_config(cfg_);
    }

    virtual ~Model() = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& store() { return store_; }
    const ParameterStore& store() const { return store_; }
    bool has_uniform_proposal() const { return uniform_.has_value(); }
    const UniformProposal& uniform_proposal() const { return *uniform_; }

    ResMade::ValueOut arnn_values(const Mat& x) const { return arnn_.forward_value(store_, x); }

    MixtureParamsV constrain_pairs(const Mat& phi_raw, int dims_per_row = 0) const {
        return constrain_value(phi_raw, cfg_.mixture_comps, cfg_.mixture_scale_min, dims_per_row);
    }

    // Batched energy evaluation, processed in fixed column blocks to bound
    // transient memory. Block size does not affect the result. Virtual so
    // tests can substitute closed-form energies for the evaluation paths.
    virtual Mat neg_energy(const Mat& xg, Eigen::Index block = 50000) const {
        Mat out(1, xg.cols());
        for (Eigen::Index c0 = 0; c0 < xg.cols(); c0 += block) {
            const Eigen::Index nc = std::min(block, xg.cols() - c0);
            out.middleCols(c0, nc) = enn_.forward_value(store_, xg.middleCols(c0, nc));
        }
        return out;
    }

    // Loss for one batch: -mean(log-p-hat + log-q), or -mean(log-q) during
    // warm-up. Proposal samples and their log densities enter the log-p-hat
    // term as tape constants, so that term reaches only the energy net and
    // the context head; unfreezing them exists solely to let tests verify the
    // marker matters. rng drives ARNN dropout, proposal draws, then ENN
    // dropout, in that order. inject replaces the draws with a previously
    // recorded set (for probing the loss at perturbed parameters); record,
    // when given, receives the set that was used.
    ObjectiveResult training_objective(Tape& t, ParamBinder& bind, const Mat& x, int S, Rng& rng,
                                       bool warm_up, bool train_mode = true,
                                       bool freeze_samples = true,
                                       const SampleSet* inject = nullptr,
                                       SampleSet* record = nullptr) {
        const Eigen::Index D = x.rows(), N = x.cols();
        if (D != cfg_.dim) throw ConfigError("objective: batch rows != model dim");
        if (N < 1) throw UsageError("objective: empty batch");
        if (!warm_up && S < 1) throw UsageError("objective: importance sample count must be positive");
        const Eigen::Index ND = N * D;

        Var vx = t.constant(x);
        ResMade::TapeOut heads = arnn_.forward(t, bind, vx, train_mode, &rng);
        Var x_pairs = t.reshape(vx, 1, ND);

        MixtureParamsT params;
        Var logq_pairs;
        if (!uniform_) {
            params = constrain(t, heads.phi_raw, cfg_.mixture_comps, cfg_.mixture_scale_min,
                               static_cast<int>(D));
            logq_pairs = mixture_log_prob(t, params, x_pairs);
        } else {
            Mat lq(1, ND);
            for (Eigen::Index n = 0; n < N; ++n)
                for (Eigen::Index d = 0; d < D; ++d)
                    lq(0, n * D + d) = uniform_->log_prob(static_cast<int>(d), x(d, n));
            logq_pairs = t.constant(lq);
        }
        Var logq_item = t.colwise_sum(t.reshape(logq_pairs, D, N));

        ObjectiveResult res;
        res.log_q_item = logq_item;
        res.mean_log_q = t.val(logq_item).mean();
        if (warm_up) {
            res.loss = t.neg(t.mean_all(logq_item));
            check_finite_loss(t, res, N, warm_up);
            return res;
        }

        // Fresh proposal draws and their log densities, computed outside the
        // tape; the importance terms may only move the energy side.
        Mat samples(1, ND * S), logq_s_v(1, ND * S);
        if (inject) {
            if (inject->samples.cols() != ND * S || inject->log_q.cols() != ND * S)
                throw UsageError("objective: injected sample set does not match batch geometry");
            samples = inject->samples;
            logq_s_v = inject->log_q;
        } else if (!uniform_) {
            MixtureParamsV pv = constrain_pairs(t.val(heads.phi_raw), static_cast<int>(D));
            samples = mixture_sample(pv, S, rng);
            MixtureParamsV rep{vops::repeat_each_col(pv.log_coeffs, S),
                               vops::repeat_each_col(pv.locs, S),
                               vops::repeat_each_col(pv.scales, S)};
            logq_s_v = mixture_log_prob_value(rep, samples);
        } else {
            for (Eigen::Index j = 0; j < ND; ++j) {
                const int d = static_cast<int>(j % D);
                const double lq = -std::log(uniform_->hi[d] - uniform_->lo[d]);
                for (Eigen::Index s = 0; s < S; ++s) {
                    samples(0, j * S + s) = uniform_->sample(d, rng);
                    logq_s_v(0, j * S + s) = lq;
                }
            }
        }
        if (record) {
            record->samples = samples;
            record->log_q = logq_s_v;
        }
        Var v_samples = t.constant(samples);
        Var logq_s;
        if (freeze_samples || uniform_) {
            logq_s = t.constant(logq_s_v);
        } else {
            MixtureParamsT rep{t.repeat_each_col(params.log_coeffs, S),
                               t.repeat_each_col(params.locs, S),
                               t.repeat_each_col(params.scales, S)};
            logq_s = mixture_log_prob(t, rep, v_samples);
        }

        // One batched energy pass over the data points and all samples.
        Var data_in = t.concat_rows(x_pairs, heads.gamma);
        Var samp_in = t.concat_rows(v_samples, t.repeat_each_col(heads.gamma, S));
        Var neg_e = enn_.forward(t, bind, t.concat_cols(data_in, samp_in), train_mode, &rng);
        Var neg_e_data = t.slice_cols(neg_e, 0, ND);
        Var neg_e_samp = t.slice_cols(neg_e, ND, ND * S);

        Var terms = t.reshape(t.sub(neg_e_samp, logq_s), S, ND);
        Var log_z = t.add_scalar(t.logsumexp_rows(terms), -std::log(static_cast<double>(S)));
        Var logp_item = t.colwise_sum(t.reshape(t.sub(neg_e_data, log_z), D, N));

        res.log_p_item = logp_item;
        res.mean_log_p = t.val(logp_item).mean();
        res.loss = t.neg(t.mean_all(t.add(logp_item, logq_item)));
        check_finite_loss(t, res, N, warm_up);
        return res;
    }

    // Importance-sampled log density for a batch, eval mode. Each
    // (row, dimension) pair draws its samples from an rng stream split off
    // the given root by global pair index, so results do not depend on chunk
    // shape or thread count; the root rng object itself is not advanced.
    LogProbEstimate estimate_log_prob(const Mat& x, int S, const Rng& rng, int threads = 1) const {
        const Eigen::Index D = x.rows(), N = x.cols();
        if (D != cfg_.dim) throw ConfigError("estimate: batch rows != model dim");
        if (S < 1) throw UsageError("estimate: importance sample count must be positive");
        LogProbEstimate est;
        est.samples = S;
        est.log_p_hat.resize(N);
        est.log_q.resize(N);
        est.log_z_hat.resize(D, N);
        if (N == 0) return est;

        // Fixed chunk geometry: at most ~50000 energy-net columns per call.
        const Eigen::Index s_chunk = std::min<Eigen::Index>(S, 500);
        const Eigen::Index rows_chunk =
            std::clamp<Eigen::Index>(50000 / (D * s_chunk), 1, N);
        const Eigen::Index n_blocks = (N + rows_chunk - 1) / rows_chunk;

        std::atomic<Eigen::Index> next{0};
        auto worker = [&]() {
            for (;;) {
                const Eigen::Index b = next.fetch_add(1);
                if (b >= n_blocks) return;
                const Eigen::Index r0 = b * rows_chunk;
                const Eigen::Index nb = std::min(rows_chunk, N - r0);
                eval_block(x, S, s_chunk, rng, r0, nb, est);
            }
        };
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        return est;
    }

    // Sampling importance resampling, one dimension at a time: draw a pool of
    // proposal candidates, weight by exp(neg-energy - log-q), keep one.
    // Returns one sample per column.
    Mat sir_sample(Eigen::Index n, int pool, Rng& rng) const {
        if (n < 1) throw UsageError("sir: sample count must be positive");
        if (pool < 1) throw UsageError("sir: pool size must be positive");
        const Eigen::Index D = cfg_.dim;
        Mat X = Mat::Zero(D, n);
        std::vector<double> w(static_cast<std::size_t>(pool));
        Eigen::Index degenerate = 0;
        for (Eigen::Index d = 0; d < D; ++d) {
            ResMade::ValueOut heads = arnn_values(X);
            // Candidates per item for this dimension, pool-major per item.
            Mat cand(1, n * pool), logq_c(1, n * pool);
            Mat gamma_c(cfg_.context_dim, n * pool);
            for (Eigen::Index i = 0; i < n; ++i) {
                const Eigen::Index pair = i * D + d;
                if (!uniform_) {
                    MixtureParamsV pv = constrain_pairs(Mat(heads.phi_raw.col(pair)));
                    MixtureParamsV rep{pv.log_coeffs.replicate(1, pool), pv.locs.replicate(1, pool),
                                       pv.scales.replicate(1, pool)};
                    Mat cs = mixture_sample(pv, pool, rng);
                    cand.middleCols(i * pool, pool) = cs;
                    logq_c.middleCols(i * pool, pool) = mixture_log_prob_value(rep, cs);
                } else {
                    const double lq = -std::log(uniform_->hi[d] - uniform_->lo[d]);
                    for (int s = 0; s < pool; ++s) {
                        cand(0, i * pool + s) = uniform_->sample(static_cast<int>(d), rng);
                        logq_c(0, i * pool + s) = lq;
                    }
                }
                for (int s = 0; s < pool; ++s) gamma_c.col(i * pool + s) = heads.gamma.col(pair);
            }
            Mat xg(1 + cfg_.context_dim, n * pool);
            xg.topRows(1) = cand;
            xg.bottomRows(cfg_.context_dim) = gamma_c;
            Mat neg_e = neg_energy(xg);
            for (Eigen::Index i = 0; i < n; ++i) {
                double m = kNegInf;
                for (int s = 0; s < pool; ++s)
                    m = std::max(m, neg_e(0, i * pool + s) - logq_c(0, i * pool + s));
                Eigen::Index pick;
                if (!std::isfinite(m)) {
                    // Weight collapse; fall back to a uniform choice.
                    ++degenerate;
                    pick = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(pool)));
                } else {
                    for (int s = 0; s < pool; ++s)
                        w[static_cast<std::size_t>(s)] =
                            std::exp(neg_e(0, i * pool + s) - logq_c(0, i * pool + s) - m);
                    pick = static_cast<Eigen::Index>(rng.categorical(w));
                }
                X(d, i) = cand(0, i * pool + pick);
            }
        }
        if (degenerate > 0)
            std::cerr << "sir: " << degenerate
                      << " pools had no usable weights; resampled uniformly\n";
        return X;
    }

    // Kernel density estimate of each conditional from importance-weighted
    // proposal samples, mixed with the proposal itself: per dimension,
    // density = (1-alpha) * sum_s w_s N(x; x_s, h^2) + alpha * q(x). Returns
    // the per-row sum over dimensions; per_dim, when given, receives the
    // (D, N) per-conditional terms. Sample streams split per pair from the
    // rng root exactly like estimate_log_prob.
    Eigen::VectorXd kde_log_prob(const Mat& x, const KdeConfig& kc, const Rng& rng,
                                 Mat* per_dim = nullptr) const {
        const Eigen::Index D = x.rows(), N = x.cols();
        if (D != cfg_.dim) throw ConfigError("kde: batch rows != model dim");
        if (!(kc.bandwidth > 0.0)) throw UsageError("kde: bandwidth must be positive");
        if (!(kc.alpha >= 0.0 && kc.alpha <= 1.0)) throw UsageError("kde: alpha must be in [0, 1]");
        if (kc.samples < 1) throw UsageError("kde: sample count must be positive");
        Eigen::VectorXd out = Eigen::VectorXd::Zero(N);
        if (per_dim) per_dim->resize(D, N);
        if (N == 0) return out;
        ResMade::ValueOut heads = arnn_values(x);
        std::vector<double> kern;
        for (Eigen::Index i = 0; i < N; ++i) {
            double total = 0.0;
            for (Eigen::Index d = 0; d < D; ++d) {
                const Eigen::Index pair = i * D + d;
                PairSamples ps = draw_pair_samples(heads, pair, static_cast<int>(d), kc.samples,
                                                   rng.split(static_cast<std::uint64_t>(pair)));
                kern.resize(static_cast<std::size_t>(kc.samples));
                for (int s = 0; s < kc.samples; ++s)
                    kern[static_cast<std::size_t>(s)] =
                        ps.log_w_norm[static_cast<std::size_t>(s)] +
                        log_normal_pdf(x(d, i), ps.samples(0, s), kc.bandwidth);
                const double log_kde = logsumexp(kern.data(), kern.size());
                const double lq = pair_log_q(heads, pair, static_cast<int>(d), x(d, i));
                const double term = logaddexp(std::log1p(-kc.alpha) + log_kde,
                                              std::log(kc.alpha) + lq);
                if (per_dim) (*per_dim)(d, i) = term;
                total += term;
            }
            out(i) = total;
        }
        return out;
    }

    // One conditional of the estimate as a reusable log-density function of
    // its own coordinate, with the preceding coordinates held at the given
    // point. Shares the sample stream of kde_log_prob on a single-column
    // batch, so evaluating the result at x(d) reproduces that pair's term.
    std::function<double(double)> kde_conditional(const Mat& x, int d, const KdeConfig& kc,
                                                  const Rng& rng) const {
        if (x.rows() != cfg_.dim || x.cols() != 1)
            throw ConfigError("kde: conditional wants a single point with model dim rows");
        if (d < 0 || d >= cfg_.dim) throw UsageError("kde: conditional dimension out of range");
        if (!(kc.bandwidth > 0.0)) throw UsageError("kde: bandwidth must be positive");
        if (!(kc.alpha >= 0.0 && kc.alpha <= 1.0)) throw UsageError("kde: alpha must be in [0, 1]");
        if (kc.samples < 1) throw UsageError("kde: sample count must be positive");
        ResMade::ValueOut heads = arnn_values(x);
        auto ps = std::make_shared<PairSamples>(draw_pair_samples(
            heads, d, d, kc.samples, rng.split(static_cast<std::uint64_t>(d))));
        MixtureParamsV phi;
        std::pair<double, double> box{0.0, 0.0};
        if (!uniform_) phi = constrain_pairs(Mat(heads.phi_raw.col(d)));
        else box = {uniform_->lo[static_cast<std::size_t>(d)], uniform_->hi[static_cast<std::size_t>(d)]};
        const double h = kc.bandwidth, alpha = kc.alpha;
        const bool is_uniform = uniform_.has_value();
        return [ps, phi, box, h, alpha, is_uniform](double v) {
            std::vector<double> kern(ps->log_w_norm.size());
            for (std::size_t s = 0; s < kern.size(); ++s)
                kern[s] = ps->log_w_norm[s] +
                          log_normal_pdf(v, ps->samples(0, static_cast<Eigen::Index>(s)), h);
            const double log_kde = logsumexp(kern.data(), kern.size());
            double lq;
            if (is_uniform)
                lq = (v >= box.first && v <= box.second) ? -std::log(box.second - box.first)
                                                         : kNegInf;
            else
                lq = mixture_log_prob_value(phi, Mat::Constant(1, 1, v))(0, 0);
            return logaddexp(std::log1p(-alpha) + log_kde, std::log(alpha) + lq);
        };
    }

    // Grid search over bandwidth and proposal weight maximizing the mean
    // kde_log_prob of the given rows. Proposal samples are drawn once per
    // conditional and reused across the whole grid.
    KdeConfig tune_kde(const Mat& x, int samples, const Rng& rng,
                       std::vector<double> bandwidths = {}, std::vector<double> alphas = {}) const {
        const Eigen::Index D = x.rows(), N = x.cols();
        if (D != cfg_.dim) throw ConfigError("kde: batch rows != model dim");
        if (N < 1) throw UsageError("kde tuning needs at least one row");
        if (bandwidths.empty())
            for (int i = 0; i < 10; ++i)
                bandwidths.push_back(std::pow(10.0, -3.0 + 3.0 * static_cast<double>(i) / 9.0));
        if (alphas.empty()) alphas = {0.005, 0.01, 0.05, 0.1, 0.25};

        Mat grid_ll = Mat::Zero(static_cast<Eigen::Index>(bandwidths.size()),
                                static_cast<Eigen::Index>(alphas.size()));
        ResMade::ValueOut heads = arnn_values(x);
        std::vector<double> kern;
        for (Eigen::Index i = 0; i < N; ++i) {
            for (Eigen::Index d = 0; d < D; ++d) {
                const Eigen::Index pair = i * D + d;
                PairSamples ps = draw_pair_samples(heads, pair, static_cast<int>(d), samples,
                                                   rng.split(static_cast<std::uint64_t>(pair)));
                const double lq = pair_log_q(heads, pair, static_cast<int>(d), x(d, i));
                for (std::size_t hi = 0; hi < bandwidths.size(); ++hi) {
                    kern.resize(static_cast<std::size_t>(samples));
                    for (int s = 0; s < samples; ++s)
                        kern[static_cast<std::size_t>(s)] =
                            ps.log_w_norm[static_cast<std::size_t>(s)] +
                            log_normal_pdf(x(d, i), ps.samples(0, s), bandwidths[hi]);
                    const double log_kde = logsumexp(kern.data(), kern.size());
                    for (std::size_t ai = 0; ai < alphas.size(); ++ai)
                        grid_ll(static_cast<Eigen::Index>(hi), static_cast<Eigen::Index>(ai)) +=
                            logaddexp(std::log1p(-alphas[ai]) + log_kde,
                                      std::log(alphas[ai]) + lq);
                }
            }
        }
        Eigen::Index best_h = 0, best_a = 0;
        grid_ll.maxCoeff(&best_h, &best_a);
        KdeConfig best;
        best.bandwidth = bandwidths[static_cast<std::size_t>(best_h)];
        best.alpha = alphas[static_cast<std::size_t>(best_a)];
        best.samples = samples;
        return best;
    }

private:
    struct PairSamples {
        Mat samples;                    // (1, S)
        std::vector<double> log_w_norm; // self-normalized importance weights
    };

    // Draws S proposal samples for one (row, dimension) pair and computes
    // normalized log importance weights neg-energy - log-q - logsumexp.
    PairSamples draw_pair_samples(const ResMade::ValueOut& heads, Eigen::Index pair, int d, int S,
                                  Rng stream) const {
        PairSamples ps;
        Mat logq_s(1, S);
        if (!uniform_) {
            MixtureParamsV pv = constrain_pairs(Mat(heads.phi_raw.col(pair)));
            ps.samples = mixture_sample(pv, S, stream);
            MixtureParamsV rep{pv.log_coeffs.replicate(1, S), pv.locs.replicate(1, S),
                               pv.scales.replicate(1, S)};
            logq_s = mixture_log_prob_value(rep, ps.samples);
        } else {
            ps.samples.resize(1, S);
            const double lq = -std::log(uniform_->hi[d] - uniform_->lo[d]);
            for (int s = 0; s < S; ++s) {
                ps.samples(0, s) = uniform_->sample(d, stream);
                logq_s(0, s) = lq;
            }
        }
        Mat xg(1 + cfg_.context_dim, S);
        xg.topRows(1) = ps.samples;
        xg.bottomRows(cfg_.context_dim) = heads.gamma.col(pair).replicate(1, S);
        Mat neg_e = neg_energy(xg);
        ps.log_w_norm.resize(static_cast<std::size_t>(S));
        for (int s = 0; s < S; ++s) ps.log_w_norm[static_cast<std::size_t>(s)] = neg_e(0, s) - logq_s(0, s);
        const double lse = logsumexp(ps.log_w_norm.data(), ps.log_w_norm.size());
        double max_w = kNegInf;
        for (auto& v : ps.log_w_norm) {
            v -= lse;
            max_w = std::max(max_w, v);
        }
        if (max_w > std::log(0.999))
            std::cerr << "kde: one importance weight carries > 99.9% of the mass\n";
        return ps;
    }

    double pair_log_q(const ResMade::ValueOut& heads, Eigen::Index pair, int d, double x) const {
        if (uniform_) return uniform_->log_prob(d, x);
        MixtureParamsV pv = constrain_pairs(Mat(heads.phi_raw.col(pair)));
        Mat xm(1, 1);
        xm(0, 0) = x;
        return mixture_log_prob_value(pv, xm)(0, 0);
    }

    void check_finite_loss(Tape& t, const ObjectiveResult& res, Eigen::Index N, bool warm_up) const {
        if (std::isfinite(t.val(res.loss)(0, 0))) return;
        for (Eigen::Index j = 0; j < N; ++j) {
            double v = t.val(res.log_q_item)(0, j);
            if (!warm_up) v += t.val(res.log_p_item)(0, j);
            if (!std::isfinite(v))
                throw EvalError("objective: non-finite loss (batch row " + std::to_string(j) + ")");
        }
        throw EvalError("objective: non-finite loss");
    }

    // One row block of estimate_log_prob: a single ARNN pass, then the
    // energy net over data points and sample chunks.
    void eval_block(const Mat& x, int S, Eigen::Index s_chunk, const Rng& rng, Eigen::Index r0,
                    Eigen::Index nb, LogProbEstimate& est) const {
        const Eigen::Index D = cfg_.dim;
        const Eigen::Index np = nb * D;
        Mat xb = x.middleCols(r0, nb);
        ResMade::ValueOut heads = arnn_values(xb);
        Eigen::Map<const Mat> x_pairs(xb.data(), 1, np);

        // Data-point energies and proposal log densities.
        Mat data_in(1 + cfg_.context_dim, np);
        data_in.topRows(1) = x_pairs;
        data_in.bottomRows(cfg_.context_dim) = heads.gamma;
        Mat neg_e_data = neg_energy(data_in);
        Mat logq_pairs(1, np);
        std::optional<MixtureParamsV> pv;
        if (!uniform_) {
            pv = constrain_pairs(heads.phi_raw, static_cast<int>(D));
            logq_pairs = mixture_log_prob_value(*pv, x_pairs);
        } else {
            for (Eigen::Index j = 0; j < np; ++j)
                logq_pairs(0, j) =
                    uniform_->log_prob(static_cast<int>(j % D), x_pairs(0, j));
        }

        // Importance terms in sample chunks; per-pair rng streams are split
        // by global pair index and advance across chunks.
        std::vector<Rng> streams;
        streams.reserve(static_cast<std::size_t>(np));
        for (Eigen::Index j = 0; j < np; ++j)
            streams.push_back(rng.split(static_cast<std::uint64_t>(r0 * D + j)));
        const Eigen::Index n_chunks = (S + s_chunk - 1) / s_chunk;
        Mat partials(n_chunks, np);
        Mat samples, logq_s, gamma_s, samp_in;
        for (Eigen::Index c = 0; c < n_chunks; ++c) {
            const Eigen::Index sc = std::min<Eigen::Index>(s_chunk, S - c * s_chunk);
            samples.resize(1, np * sc);
            logq_s.resize(1, np * sc);
            if (!uniform_) {
                for (Eigen::Index j = 0; j < np; ++j) {
                    MixtureParamsV pj{pv->log_coeffs.col(j), pv->locs.col(j), pv->scales.col(j)};
                    samples.middleCols(j * sc, sc) = mixture_sample(pj, sc, streams[static_cast<std::size_t>(j)]);
                    MixtureParamsV rep{pj.log_coeffs.replicate(1, sc), pj.locs.replicate(1, sc),
                                       pj.scales.replicate(1, sc)};
                    logq_s.middleCols(j * sc, sc) =
                        mixture_log_prob_value(rep, samples.middleCols(j * sc, sc));
                }
            } else {
                for (Eigen::Index j = 0; j < np; ++j) {
                    const int d = static_cast<int>(j % D);
                    const double lq = -std::log(uniform_->hi[d] - uniform_->lo[d]);
                    for (Eigen::Index s = 0; s < sc; ++s) {
                        samples(0, j * sc + s) = uniform_->sample(d, streams[static_cast<std::size_t>(j)]);
                        logq_s(0, j * sc + s) = lq;
                    }
                }
            }
            if (!logq_s.allFinite())
                throw EvalError("estimate: proposal sample scored outside its own support");
            samp_in.resize(1 + cfg_.context_dim, np * sc);
            samp_in.topRows(1) = samples;
            for (Eigen::Index j = 0; j < np; ++j)
                samp_in.block(1, j * sc, cfg_.context_dim, sc) =
                    heads.gamma.col(j).replicate(1, sc);
            Mat neg_e_s = neg_energy(samp_in);
            Mat terms = neg_e_s - logq_s;
            for (Eigen::Index j = 0; j < np; ++j)
                partials(c, j) = logsumexp(terms.data() + j * sc, static_cast<std::size_t>(sc));
        }
        const double log_s = std::log(static_cast<double>(S));
        for (Eigen::Index i = 0; i < nb; ++i) {
            double lp = 0.0, lq = 0.0;
            for (Eigen::Index d = 0; d < D; ++d) {
                const Eigen::Index j = i * D + d;
                const double log_z =
                    logsumexp(partials.data() + j * n_chunks, static_cast<std::size_t>(n_chunks)) - log_s;
                est.log_z_hat(d, r0 + i) = log_z;
                lp += neg_e_data(0, j) - log_z;
                lq += logq_pairs(0, j);
            }
            est.log_p_hat(r0 + i) = lp;
            est.log_q(r0 + i) = lq;
        }
    }

    ModelConfig cfg_;
    ParameterStore& store_;
    ResMade arnn_;
    EnergyNet enn_;
    std::optional<UniformProposal> uniform_;
};

}  // namespace aem
