#pragma once

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "aem/tape.hpp"

namespace aem::testutil {

inline Mat rand_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
    return m;
}

using BuildFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_loss(const std::vector<Mat>& params, const BuildFn& build) {
    Tape t;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(t.leaf(p));
    Var loss = build(t, leaves);
    return t.val(loss)(0, 0);
}

// Central finite differences on every scalar of every leaf against the
// tape's analytic gradients.
inline void check_grads(std::vector<Mat> params, const BuildFn& build, double tol = 1e-6,
                        double step = 1e-5) {
    Tape t;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(t.leaf(p));
    Var loss = build(t, leaves);
    t.backward(loss);
    std::vector<Mat> grads;
    for (Var v : leaves) grads.push_back(t.grad_of(v));

    for (std::size_t k = 0; k < params.size(); ++k) {
        for (Eigen::Index j = 0; j < params[k].cols(); ++j) {
            for (Eigen::Index i = 0; i < params[k].rows(); ++i) {
                const double h = step * std::max(1.0, std::abs(params[k](i, j)));
                const double orig = params[k](i, j);
                params[k](i, j) = orig + h;
                const double up = eval_loss(params, build);
                params[k](i, j) = orig - h;
                const double dn = eval_loss(params, build);
                params[k](i, j) = orig;
                const double fd = (up - dn) / (2.0 * h);
                const double an = grads[k](i, j);
                INFO("leaf " << k << " entry (" << i << "," << j << ") fd=" << fd << " an=" << an);
                REQUIRE(std::abs(fd - an) <= tol * std::max(1.0, std::abs(an)));
            }
        }
    }
}

// Weighted sum against a fixed matrix so the loss mixes all entries.
inline Var weighted_sum(Tape& t, Var y, const Mat& w) {
    return t.sum_all(t.mul(y, t.constant(w)));
}

}  // namespace aem::testutil
