#pragma once

#include <string>

#include "aem/config.hpp"
#include "aem/tape.hpp"

namespace aem {

// Fully-connected residual network returning a non-positive unnormalized log
// density -E(x_d; gamma_d). One parameter set serves every dimension; the
// input is the (1 + context-dim)-row concatenation of x and gamma, one column
// per evaluation point.
class EnergyNet {
public:
    EnergyNet(const ModelConfig& cfg, ParameterStore& store, Rng& init_rng)
        : in_dim_(1 + cfg.context_dim),
          H_(cfg.enn_hidden_dim),
          n_blocks_(cfg.enn_n_blocks),
          use_tanh_(cfg.enn_activation == "tanh"),
          dropout_(cfg.enn_dropout) {
        auto glorot = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
            store.add_glorot(name, rows, cols, init_rng);
            store.add_zeros(name + ".b", rows, 1);
        };
        glorot("enn.in", H_, in_dim_);
        for (int i = 0; i < n_blocks_; ++i) {
            const std::string p = "enn.block" + std::to_string(i);
            glorot(p + ".1", H_, H_);
            glorot(p + ".2", H_, H_);
        }
        glorot("enn.out", 1, H_);
    }

    // xg: (1 + context-dim, M) -> (1, M), every entry <= 0.
    Var forward(Tape& t, ParamBinder& bind, Var xg, bool train, Rng* dropout_rng) const {
        if (t.val(xg).rows() != in_dim_)
            throw ConfigError("energy net: input rows != 1 + context_dim");
        Var h = t.affine(bind("enn.in"), bind("enn.in.b"), xg);
        for (int i = 0; i < n_blocks_; ++i) {
            const std::string p = "enn.block" + std::to_string(i);
            Var a = act(t, h);
            a = t.affine(bind(p + ".1"), bind(p + ".1.b"), a);
            if (train && dropout_ > 0.0) a = t.dropout(a, dropout_, *dropout_rng);
            a = act(t, a);
            a = t.affine(bind(p + ".2"), bind(p + ".2.b"), a);
            h = t.add(h, a);
        }
        Var out = t.affine(bind("enn.out"), bind("enn.out.b"), act(t, h));
        return t.neg(t.softplus_(out));
    }

    // Tape-free eval-mode forward, bitwise identical to forward() without
    // dropout.
    Mat forward_value(const ParameterStore& store, const Mat& xg) const {
        if (xg.rows() != in_dim_) throw ConfigError("energy net: input rows != 1 + context_dim");
        auto W = [&](const std::string& name) -> const Mat& { return store.at(name).value; };
        Mat h = vops::affine(W("enn.in"), W("enn.in.b"), xg);
        for (int i = 0; i < n_blocks_; ++i) {
            const std::string p = "enn.block" + std::to_string(i);
            Mat a = vops::affine(W(p + ".1"), W(p + ".1.b"), act_v(h));
            a = vops::affine(W(p + ".2"), W(p + ".2.b"), act_v(a));
            h += a;
        }
        Mat out = vops::affine(W("enn.out"), W("enn.out.b"), act_v(h));
        return -vops::softplus(out);
    }

private:
    Var act(Tape& t, Var x) const { return use_tanh_ ? t.tanh_(x) : t.relu(x); }
    Mat act_v(const Mat& x) const { return use_tanh_ ? vops::tanh(x) : vops::relu(x); }

    int in_dim_, H_, n_blocks_;
    bool use_tanh_;
    double dropout_;
};

}  // namespace aem
