#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "aem/checkpoint.hpp"
#include "aem/config.hpp"
#include "aem/model.hpp"
#include "aem/optimizer.hpp"
#include "aem/rng.hpp"
#include "aem/tape.hpp"

namespace aem {

struct TrainResult {
    long best_step = -1;        // 1-based step after which the best metric was seen
    double best_metric = kNegInf;
    long steps_run = 0;
    bool stopped_early = false;
    bool diverged = false;
    std::string message;
};

// All randomness in a run derives from one root seed. Stream 0 initializes
// parameters, 1 shuffles batches, 2 drives validation estimates, and stream
// 3 + s drives training step s, so the consumption pattern of one phase can
// never shift another.
inline Rng model_init_stream(std::uint64_t seed) { return Rng(seed).split(0); }

namespace detail {

inline bool grads_finite(const ParameterStore& store) {
    for (const auto& e : store.entries())
        if (!e.grad.allFinite()) return false;
    return true;
}

}  // namespace detail

// Adam + cosine decay over tc.total_steps with periodic validation. The best
// validation metric's parameters go to ckpt_path (mean log q during warm-up,
// mean estimated log p after; the best resets at the phase switch). A
// non-finite loss or gradient aborts and emits the parameters as of the last
// completed step to ckpt_path + ".last-good". log, when given, receives one
// CSV row per step. Data matrices hold one point per column.
inline TrainResult train_model(Model& model, const Mat& train_x, const Mat& val_x,
                               const TrainConfig& tc, const std::string& ckpt_path,
                               std::ostream* log = nullptr, bool verbose = false) {
    tc.validate();
    const Eigen::Index D = train_x.rows(), N = train_x.cols();
    if (D != model.config().dim || val_x.rows() != D)
        throw ConfigError("train: data dimension does not match the model");
    if (N < 1 || val_x.cols() < 1) throw ConfigError("train: empty split");
    const Eigen::Index B = std::min<Eigen::Index>(tc.batch_size, N);
    const Eigen::Index val_n = tc.val_subset > 0
                                   ? std::min<Eigen::Index>(tc.val_subset, val_x.cols())
                                   : val_x.cols();

    ParameterStore& store = model.store();
    Adam adam(store);
    const Rng root(tc.seed);
    Rng shuffle_rng = root.split(1);
    const Rng val_rng = root.split(2);

    CheckpointMeta meta;
    meta.model = model.config();
    meta.train = tc;
    meta.rng_state = root.state_string();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;
    Eigen::Index cursor = N;  // forces a shuffle before the first batch

    TrainResult res;
    bool best_saved = false;
    long plateau = 0;
    bool prev_phase_warm = tc.warm_up_steps > 0;

    if (log) *log << "step,lr,train_loss,val_log_p_hat,val_log_q\n";

    auto emit_last_good = [&](long step, const std::string& why) {
        store.zero_grads();
        meta.best_metric = res.best_metric;
        meta.best_step = res.best_step;
        save_checkpoint(ckpt_path + ".last-good", meta, store);
        res.diverged = true;
        res.steps_run = step;
        res.message = "diverged at step " + std::to_string(step + 1) + ": " + why +
                      " (parameters from step " + std::to_string(step) + " written to " +
                      ckpt_path + ".last-good)";
    };

    Mat xb(D, B);
    for (long step = 0; step < tc.total_steps; ++step) {
        const bool warm = step < tc.warm_up_steps;
        for (Eigen::Index i = 0; i < B; ++i) {
            if (cursor == N) {
                shuffle_rng.shuffle(order);
                cursor = 0;
            }
            xb.col(i) = train_x.col(order[static_cast<std::size_t>(cursor++)]);
        }

        Tape t;
        ParamBinder bind(t, store);
        Rng step_rng = root.split(3 + static_cast<std::uint64_t>(step));
        double train_loss = 0.0;
        try {
            ObjectiveResult obj = model.training_objective(t, bind, xb,
                                                           tc.train_importance_samples,
                                                           step_rng, warm);
            train_loss = t.val(obj.loss)(0, 0);
            t.backward(obj.loss);
            bind.drain_grads();
        } catch (const EvalError& e) {
            emit_last_good(step, e.what());
            return res;
        }
        if (!detail::grads_finite(store)) {
            emit_last_good(step, "non-finite gradient");
            return res;
        }
        const double lr = cosine_lr(tc.learning_rate, step, tc.total_steps);
        adam.step(lr);
        res.steps_run = step + 1;

        const bool validate = (step + 1) % tc.val_interval == 0 || step + 1 == tc.total_steps;
        double val_log_p = 0.0, val_log_q = 0.0;
        bool have_val = false, have_val_p = false;
        if (validate) {
            // Params trained only by warm-up until step warm_up_steps ran.
            const bool phase_warm = step + 1 <= tc.warm_up_steps && tc.warm_up_steps > 0;
            if (prev_phase_warm && !phase_warm) {
                res.best_metric = kNegInf;  // log q and log p are not comparable
                res.best_step = -1;
                plateau = 0;
            }
            prev_phase_warm = phase_warm;
            LogProbEstimate est = model.estimate_log_prob(
                val_x.leftCols(val_n), tc.train_importance_samples, val_rng);
            val_log_q = est.log_q.mean();
            have_val = true;
            double metric = val_log_q;
            if (!phase_warm) {
                val_log_p = est.log_p_hat.mean();
                have_val_p = true;
                metric = val_log_p;
            }
            if (metric > res.best_metric) {
                res.best_metric = metric;
                res.best_step = step + 1;
                meta.best_metric = metric;
                meta.best_step = step + 1;
                save_checkpoint(ckpt_path, meta, store);
                best_saved = true;
                plateau = 0;
            } else if (!phase_warm) {
                ++plateau;
            }
            if (verbose)
                std::fprintf(stderr, "step %ld/%ld lr %.3g loss %.5f val %s %.5f%s\n",
                             step + 1, tc.total_steps, lr, train_loss,
                             phase_warm ? "log-q" : "log-p-hat", metric,
                             res.best_step == step + 1 ? " (best)" : "");
            if (!phase_warm && tc.early_stop_window > 0 && plateau >= tc.early_stop_window) {
                res.stopped_early = true;
                res.message = "no validation improvement in " +
                              std::to_string(tc.early_stop_window) + " checks, stopping at step " +
                              std::to_string(step + 1);
                if (log)
                    *log << step + 1 << ',' << detail::format_double(lr) << ','
                         << detail::format_double(train_loss) << ','
                         << detail::format_double(val_log_p) << ','
                         << detail::format_double(val_log_q) << '\n';
                return res;
            }
        }
        if (log) {
            *log << step + 1 << ',' << detail::format_double(lr) << ','
                 << detail::format_double(train_loss) << ',';
            if (have_val_p) *log << detail::format_double(val_log_p);
            *log << ',';
            if (have_val) *log << detail::format_double(val_log_q);
            *log << '\n';
        }
    }
    if (!best_saved) {
        // Zero-step schedules cannot reach a validation point.
        meta.best_metric = res.best_metric;
        meta.best_step = res.best_step;
        save_checkpoint(ckpt_path, meta, store);
    }
    return res;
}

}  // namespace aem
