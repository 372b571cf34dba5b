#pragma once

#include <cmath>
#include <cstdio>

#include "aem/errors.hpp"
#include "aem/parameter_store.hpp"

namespace aem {

// Cosine decay from lr0 at step 0 to 0 at total_steps. Steps past the
// schedule clamp to 0 with a warning; the training loop never goes there.
inline double cosine_lr(double lr0, long step, long total_steps) {
    if (total_steps <= 0) throw UsageError("cosine_lr: total_steps must be positive");
    if (step < 0) throw UsageError("cosine_lr: negative step");
    if (step > total_steps) {
        std::fprintf(stderr, "warning: cosine_lr past schedule end (step %ld > %ld), clamping\n",
                     step, total_steps);
        step = total_steps;
    }
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)));
}

// Adam with bias correction. Moment buffers live in the parameter store so a
// checkpoint restores the optimizer exactly.
class Adam {
public:
    explicit Adam(ParameterStore& store, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : store_(&store), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    long step_count() const { return step_; }
    void set_step_count(long t) {
        if (t < 0) throw UsageError("adam: negative step count");
        step_ = t;
    }

    // One update from the gradients currently in the store; clears them.
    void step(double lr) {
        ++step_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
        for (ParamEntry& e : store_->entries()) {
            if (!e.grad.allFinite())
                throw EvalError("adam: non-finite gradient for '" + e.name + "'");
            e.m = beta1_ * e.m + (1.0 - beta1_) * e.grad;
            e.v = beta2_ * e.v + (1.0 - beta2_) * e.grad.cwiseProduct(e.grad);
            e.value.array() -= lr * (e.m.array() / c1) / ((e.v.array() / c2).sqrt() + eps_);
            e.grad.setZero();
        }
    }

private:
    ParameterStore* store_;
    double beta1_, beta2_, eps_;
    long step_ = 0;
};

}  // namespace aem
