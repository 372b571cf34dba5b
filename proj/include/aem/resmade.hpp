#pragma once

#include <memory>
#include <string>

#include "aem/config.hpp"
#include "aem/masks.hpp"
#include "aem/tape.hpp"

namespace aem {

// Masked autoregressive network with pre-activation residual blocks. For a
// batch x laid out D x N it emits, per (item, dimension) pair, raw proposal
// parameters (3K slots, mixture kind only) and a context vector (C slots).
// Pair columns are ordered item-major: pair p = n*D + d.
class ResMade {
public:
    ResMade(const ModelConfig& cfg, ParameterStore& store, Rng& init_rng)
        : D_(cfg.dim),
          H_(cfg.resmade_hidden_dim),
          n_blocks_(cfg.resmade_n_blocks),
          context_dim_(cfg.context_dim),
          phi_slots_(cfg.proposal_kind == "mixture" ? 3 * cfg.mixture_comps : 0),
          dropout_(cfg.resmade_dropout) {
        const DegreeAssignment deg = assign_degrees(D_, H_);
        mask_in_ = input_mask(deg);
        mask_hidden_ = hidden_mask(deg);
        mask_out_ = output_mask(deg, slots_per_dim());

        auto masked_glorot = [&](const std::string& name, const Mat& mask) {
            Mat& w = store.add_glorot(name, mask.rows(), mask.cols(), init_rng);
            w = w.cwiseProduct(mask);  // structurally absent weights start (and stay) zero
            store.add_zeros(name + ".b", mask.rows(), 1);
        };
        masked_glorot("arnn.in", *mask_in_);
        for (int i = 0; i < n_blocks_; ++i) {
            const std::string p = "arnn.block" + std::to_string(i);
            masked_glorot(p + ".1", *mask_hidden_);
            masked_glorot(p + ".2", *mask_hidden_);
        }
        masked_glorot("arnn.out", *mask_out_);
    }

    int slots_per_dim() const { return phi_slots_ + context_dim_; }
    int phi_slots() const { return phi_slots_; }
    int context_dim() const { return context_dim_; }
    int dim() const { return D_; }

    struct TapeOut {
        Var phi_raw;  // (3K, N*D); invalid for the uniform proposal kind
        Var gamma;    // (C, N*D)
    };

    // x: (D, N). Dropout fires only with train = true and a non-zero rate.
    TapeOut forward(Tape& t, ParamBinder& bind, Var x, bool train, Rng* dropout_rng) const {
        if (t.val(x).rows() != D_) throw ConfigError("resmade: input rows != dim");
        const Eigen::Index n = t.val(x).cols();
        Var h = t.masked_affine(bind("arnn.in"), bind("arnn.in.b"), x, mask_in_);
        for (int i = 0; i < n_blocks_; ++i) {
            const std::string p = "arnn.block" + std::to_string(i);
            Var a = t.relu(h);
            a = t.masked_affine(bind(p + ".1"), bind(p + ".1.b"), a, mask_hidden_);
            if (train && dropout_ > 0.0) a = t.dropout(a, dropout_, *dropout_rng);
            a = t.relu(a);
            a = t.masked_affine(bind(p + ".2"), bind(p + ".2.b"), a, mask_hidden_);
            h = t.add(h, a);
        }
        Var out = t.masked_affine(bind("arnn.out"), bind("arnn.out.b"), t.relu(h), mask_out_);
        Var flat = t.reshape(out, slots_per_dim(), n * D_);
        TapeOut r;
        if (phi_slots_ > 0) r.phi_raw = t.slice_rows(flat, 0, phi_slots_);
        r.gamma = t.slice_rows(flat, phi_slots_, context_dim_);
        return r;
    }

    struct ValueOut {
        Mat phi_raw;  // empty for the uniform proposal kind
        Mat gamma;
    };

    // Tape-free eval-mode forward; bitwise identical to forward() without
    // dropout because both run the same value kernels.
    ValueOut forward_value(const ParameterStore& store, const Mat& x) const {
        if (x.rows() != D_) throw ConfigError("resmade: input rows != dim");
        auto W = [&](const std::string& name) -> const Mat& { return store.at(name).value; };
        Mat h = vops::masked_affine(W("arnn.in"), *mask_in_, W("arnn.in.b"), x);
        for (int i = 0; i < n_blocks_; ++i) {
            const std::string p = "arnn.block" + std::to_string(i);
            Mat a = vops::masked_affine(W(p + ".1"), *mask_hidden_, W(p + ".1.b"), vops::relu(h));
            a = vops::masked_affine(W(p + ".2"), *mask_hidden_, W(p + ".2.b"), vops::relu(a));
            h += a;
        }
        Mat out = vops::masked_affine(W("arnn.out"), *mask_out_, W("arnn.out.b"), vops::relu(h));
        Eigen::Map<const Mat> flat(out.data(), slots_per_dim(), x.cols() * D_);
        ValueOut r;
        if (phi_slots_ > 0) r.phi_raw = flat.topRows(phi_slots_);
        r.gamma = flat.middleRows(phi_slots_, context_dim_);
        return r;
    }

private:
    int D_, H_, n_blocks_, context_dim_, phi_slots_;
    double dropout_;
    std::shared_ptr<const Mat> mask_in_, mask_hidden_, mask_out_;
};

}  // namespace aem
