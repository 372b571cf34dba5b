#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "aem/errors.hpp"
#include "aem/numerics.hpp"
#include "aem/parameter_store.hpp"
#include "aem/rng.hpp"

namespace aem {

// Value kernels shared by the tape ops and the tape-free evaluation paths of
// the networks, so both produce bitwise-identical numbers.
namespace vops {

namespace detail {

// Product kernel with a pinned accumulation order: every output entry starts
// at the bias and adds W(i,k)*x(k,j) over ascending k through one fused
// accumulator (std::fma, so the compiler cannot re-contract differently per
// call site). A column's result therefore never depends on which other
// columns share the call, which blocked BLAS kernels do not guarantee.
inline void affine_into(const Mat& W, const Mat& b, const Mat& x, Mat& y) {
    const Eigen::Index H = W.rows(), K = W.cols(), N = x.cols();
    const double* wd = W.data();
    const double* bd = b.data();
    constexpr Eigen::Index IB = 64;
    for (Eigen::Index j = 0; j < N; ++j) {
        const double* xj = x.data() + j * K;
        double* yj = y.data() + j * H;
        Eigen::Index i0 = 0;
        for (; i0 + IB <= H; i0 += IB) {
            double acc[IB];
            for (int r = 0; r < IB; ++r) acc[r] = bd[i0 + r];
            for (Eigen::Index k = 0; k < K; ++k) {
                const double s = xj[k];
                const double* wk = wd + k * H + i0;
                for (int r = 0; r < IB; ++r) acc[r] = std::fma(s, wk[r], acc[r]);
            }
            for (int r = 0; r < IB; ++r) yj[i0 + r] = acc[r];
        }
        if (i0 < H) {
            const Eigen::Index ib = H - i0;
            double acc[IB];
            for (Eigen::Index r = 0; r < ib; ++r) acc[r] = bd[i0 + r];
            for (Eigen::Index k = 0; k < K; ++k) {
                const double s = xj[k];
                const double* wk = wd + k * H + i0;
                for (Eigen::Index r = 0; r < ib; ++r) acc[r] = std::fma(s, wk[r], acc[r]);
            }
            for (Eigen::Index r = 0; r < ib; ++r) yj[i0 + r] = acc[r];
        }
    }
}

}  // namespace detail

inline Mat affine(const Mat& W, const Mat& b, const Mat& x) {
    Mat y(W.rows(), x.cols());
    detail::affine_into(W, b, x, y);
    return y;
}

inline Mat masked_affine(const Mat& W, const Mat& M, const Mat& b, const Mat& x) {
    // Exact products with a 0/1 mask, so pre-masking preserves the kernel's
    // per-coefficient accumulation chain.
    Mat y(W.rows(), x.cols());
    detail::affine_into(W.cwiseProduct(M), b, x, y);
    return y;
}

inline Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

inline Mat tanh(const Mat& x) { return x.array().tanh().matrix(); }

inline Mat softplus(const Mat& x) {
    return x.unaryExpr([](double v) { return aem::softplus(v); });
}

inline Mat logsumexp_rows(const Mat& x) {
    Mat y(1, x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double m = x.col(j).maxCoeff();
        if (m == kNegInf) {
            y(0, j) = kNegInf;
        } else {
            y(0, j) = m + std::log((x.col(j).array() - m).exp().sum());
        }
    }
    return y;
}

inline Mat log_softmax_rows(const Mat& x) {
    Mat y(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double m = x.col(j).maxCoeff();
        const double lse = m + std::log((x.col(j).array() - m).exp().sum());
        y.col(j) = (x.col(j).array() - lse).matrix();
    }
    return y;
}

inline Mat repeat_each_col(const Mat& x, Eigen::Index r) {
    Mat y(x.rows(), x.cols() * r);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index t = 0; t < r; ++t) y.col(j * r + t) = x.col(j);
    return y;
}

}  // namespace vops

class Tape;

// Handle to a node on a tape; cheap to copy.
struct Var {
    Tape* tape = nullptr;
    std::size_t idx = 0;
    bool valid() const { return tape != nullptr; }
};

// Eager reverse-mode tape over dense double matrices. Every op computes its
// value immediately and records a closure that scatters the node's gradient
// back into its parents. Matrices are laid out features-by-rows,
// batch-by-columns, so a linear layer is y = W x + b with one column per item.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf with no parents; gradients accumulate here but stop.
    Var leaf(Mat value) { return push(std::move(value)); }

    Var constant(Mat value) { return push(std::move(value)); }

    const Mat& val(Var v) const { return node(v).value; }

    // Gradient after backward(); zero matrix if the node was never reached.
    Mat grad_of(Var v) const {
        const NodeRec& n = node(v);
        if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    std::size_t node_count() const { return nodes_.size(); }

    // y = W x + b, bias broadcast across columns. W: (out, in), b: (out, 1).
    Var affine(Var W, Var b, Var x) {
        const Mat& Wv = val(W);
        const Mat& bv = val(b);
        const Mat& xv = val(x);
        check(Wv.cols() == xv.rows(), "affine: W/x inner dims differ");
        check(bv.rows() == Wv.rows() && bv.cols() == 1, "affine: bias shape");
        Var out = push(vops::affine(Wv, bv, xv));
        set_back(out, [Wi = W.idx, bi = b.idx, xi = x.idx](Tape& t, const Mat& g) {
            t.accum(Wi, g * t.nodes_[xi].value.transpose());
            t.accum(bi, g.rowwise().sum());
            t.accum(xi, t.nodes_[Wi].value.transpose() * g);
        });
        return out;
    }

    // y = (W .* M) x + b with a fixed 0/1 mask on the weights.
    Var masked_affine(Var W, Var b, Var x, std::shared_ptr<const Mat> mask) {
        const Mat& Wv = val(W);
        const Mat& bv = val(b);
        const Mat& xv = val(x);
        check(mask != nullptr, "masked_affine: null mask");
        check(mask->rows() == Wv.rows() && mask->cols() == Wv.cols(), "masked_affine: mask shape");
        check(Wv.cols() == xv.rows(), "masked_affine: W/x inner dims differ");
        check(bv.rows() == Wv.rows() && bv.cols() == 1, "masked_affine: bias shape");
        Var out = push(vops::masked_affine(Wv, *mask, bv, xv));
        set_back(out, [Wi = W.idx, bi = b.idx, xi = x.idx, mask](Tape& t, const Mat& g) {
            t.accum(Wi, (g * t.nodes_[xi].value.transpose()).cwiseProduct(*mask));
            t.accum(bi, g.rowwise().sum());
            t.accum(xi, t.nodes_[Wi].value.cwiseProduct(*mask).transpose() * g);
        });
        return out;
    }

    // max(x, 0); the derivative at exactly zero is zero.
    Var relu(Var x) {
        Var out = push(vops::relu(val(x)));
        set_back(out, [xi = x.idx](Tape& t, const Mat& g) {
            t.accum(xi, ((t.nodes_[xi].value.array() > 0.0).select(g.array(), 0.0)).matrix());
        });
        return out;
    }

    Var tanh_(Var x) {
        Var out = push(vops::tanh(val(x)));
        set_back(out, [xi = x.idx, oi = out.idx](Tape& t, const Mat& g) {
            const Mat& y = t.nodes_[oi].value;
            t.accum(xi, (g.array() * (1.0 - y.array().square())).matrix());
        });
        return out;
    }

    Var softplus_(Var x) {
        Var out = push(vops::softplus(val(x)));
        set_back(out, [xi = x.idx](Tape& t, const Mat& g) {
            t.accum(xi, g.cwiseProduct(t.nodes_[xi].value.unaryExpr([](double v) { return sigmoid(v); })));
        });
        return out;
    }

    Var exp_(Var x) {
        Var out = push(val(x).array().exp().matrix());
        set_back(out, [xi = x.idx, oi = out.idx](Tape& t, const Mat& g) {
            t.accum(xi, g.cwiseProduct(t.nodes_[oi].value));
        });
        return out;
    }

    Var log_(Var x) {
        Var out = push(val(x).array().log().matrix());
        set_back(out, [xi = x.idx](Tape& t, const Mat& g) {
            t.accum(xi, g.cwiseQuotient(t.nodes_[xi].value));
        });
        return out;
    }

    Var neg(Var x) {
        Var out = push(-val(x));
        set_back(out, [xi = x.idx](Tape& t, const Mat& g) { t.accum(xi, -g); });
        return out;
    }

    Var add(Var a, Var b) {
        check_same_shape(a, b, "add");
        Var out = push(val(a) + val(b));
        set_back(out, [ai = a.idx, bi = b.idx](Tape& t, const Mat& g) {
            t.accum(ai, g);
            t.accum(bi, g);
        });
        return out;
    }

    Var sub(Var a, Var b) {
        check_same_shape(a, b, "sub");
        Var out = push(val(a) - val(b));
        set_back(out, [ai = a.idx, bi = b.idx](Tape& t, const Mat& g) {
            t.accum(ai, g);
            t.accum(bi, -g);
        });
        return out;
    }

    Var mul(Var a, Var b) {
        check_same_shape(a, b, "mul");
        Var out = push(val(a).cwiseProduct(val(b)));
        set_back(out, [ai = a.idx, bi = b.idx](Tape& t, const Mat& g) {
            t.accum(ai, g.cwiseProduct(t.nodes_[bi].value));
            t.accum(bi, g.cwiseProduct(t.nodes_[ai].value));
        });
        return out;
    }

    Var div(Var a, Var b) {
        check_same_shape(a, b, "div");
        Var out = push(val(a).cwiseQuotient(val(b)));
        set_back(out, [ai = a.idx, bi = b.idx, oi = out.idx](Tape& t, const Mat& g) {
            const Mat& bv = t.nodes_[bi].value;
            t.accum(ai, g.cwiseQuotient(bv));
            t.accum(bi, -g.cwiseProduct(t.nodes_[oi].value).cwiseQuotient(bv));
        });
        return out;
    }

    Var add_scalar(Var x, double c) {
        Var out = push((val(x).array() + c).matrix());
        set_back(out, [xi = x.idx](Tape& t, const Mat& g) { t.accum(xi, g); });
        return out;
    }

    Var mul_scalar(Var x, double c) {
        Var out = push(val(x) * c);
        set_back(out, [xi = x.idx, c](Tape& t, const Mat& g) { t.accum(xi, g * c); });
        return out;
    }

    // Stack a on top of b along the feature (row) axis.
    Var concat_rows(Var a, Var b) {
        const Mat& av = val(a);
        const Mat& bv = val(b);
        check(av.cols() == bv.cols(), "concat_rows: column counts differ");
        const Eigen::Index ar = av.rows(), br = bv.rows();
        Mat y(ar + br, av.cols());
        y.topRows(ar) = av;
        y.bottomRows(br) = bv;
        Var out = push(std::move(y));
        set_back(out, [ai = a.idx, bi = b.idx, ar, br](Tape& t, const Mat& g) {
            t.accum(ai, g.topRows(ar));
            t.accum(bi, g.bottomRows(br));
        });
        return out;
    }

    // a and b side by side along the column (batch) axis.
    Var concat_cols(Var a, Var b) {
        const Mat& av = val(a);
        const Mat& bv = val(b);
        check(av.rows() == bv.rows(), "concat_cols: row counts differ");
        const Eigen::Index ac = av.cols(), bc = bv.cols();
        Mat y(av.rows(), ac + bc);
        y.leftCols(ac) = av;
        y.rightCols(bc) = bv;
        Var out = push(std::move(y));
        set_back(out, [ai = a.idx, bi = b.idx, ac, bc](Tape& t, const Mat& g) {
            t.accum(ai, g.leftCols(ac));
            t.accum(bi, g.rightCols(bc));
        });
        return out;
    }

    // Columns [c0, c0 + n) of x.
    Var slice_cols(Var x, Eigen::Index c0, Eigen::Index n) {
        const Mat& xv = val(x);
        check(c0 >= 0 && n > 0 && c0 + n <= xv.cols(), "slice_cols: range out of bounds");
        Var out = push(xv.middleCols(c0, n));
        set_back(out, [xi = x.idx, c0, n](Tape& t, const Mat& g) {
            Mat d = Mat::Zero(t.nodes_[xi].value.rows(), t.nodes_[xi].value.cols());
            d.middleCols(c0, n) = g;
            t.accum(xi, std::move(d));
        });
        return out;
    }

    // Rows [r0, r0 + n) of x.
    Var slice_rows(Var x, Eigen::Index r0, Eigen::Index n) {
        const Mat& xv = val(x);
        check(r0 >= 0 && n > 0 && r0 + n <= xv.rows(), "slice_rows: range out of bounds");
        Var out = push(xv.middleRows(r0, n));
        set_back(out, [xi = x.idx, r0, n](Tape& t, const Mat& g) {
            Mat d = Mat::Zero(t.nodes_[xi].value.rows(), t.nodes_[xi].value.cols());
            d.middleRows(r0, n) = g;
            t.accum(xi, std::move(d));
        });
        return out;
    }

    // Vertical tiling: k copies of x stacked along rows.
    Var replicate_rows(Var x, Eigen::Index k) {
        check(k > 0, "replicate_rows: k must be positive");
        const Mat& xv = val(x);
        const Eigen::Index r = xv.rows();
        Var out = push(xv.replicate(k, 1));
        set_back(out, [xi = x.idx, k, r](Tape& t, const Mat& g) {
            Mat d = g.middleRows(0, r);
            for (Eigen::Index i = 1; i < k; ++i) d += g.middleRows(i * r, r);
            t.accum(xi, std::move(d));
        });
        return out;
    }

    // Each column repeated r consecutive times: (R, C) -> (R, C*r).
    Var repeat_each_col(Var x, Eigen::Index r) {
        check(r > 0, "repeat_each_col: r must be positive");
        Var out = push(vops::repeat_each_col(val(x), r));
        set_back(out, [xi = x.idx, r](Tape& t, const Mat& g) {
            const Eigen::Index c = t.nodes_[xi].value.cols();
            Mat d(g.rows(), c);
            for (Eigen::Index j = 0; j < c; ++j) {
                d.col(j) = g.col(j * r);
                for (Eigen::Index k = 1; k < r; ++k) d.col(j) += g.col(j * r + k);
            }
            t.accum(xi, std::move(d));
        });
        return out;
    }

    // Same storage (column-major), new shape.
    Var reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
        const Mat& xv = val(x);
        check(rows * cols == xv.size(), "reshape: element count mismatch");
        Var out = push(Mat(Eigen::Map<const Mat>(xv.data(), rows, cols)));
        set_back(out, [xi = x.idx](Tape& t, const Mat& g) {
            const Mat& xv2 = t.nodes_[xi].value;
            t.accum(xi, Mat(Eigen::Map<const Mat>(g.data(), xv2.rows(), xv2.cols())));
        });
        return out;
    }

    // (R, C) -> (1, C), summing each column.
    Var colwise_sum(Var x) {
        const Mat& xv = val(x);
        const Eigen::Index r = xv.rows();
        Var out = push(Mat(xv.colwise().sum()));
        set_back(out, [xi = x.idx, r](Tape& t, const Mat& g) { t.accum(xi, g.replicate(r, 1)); });
        return out;
    }

    Var sum_all(Var x) {
        const Mat& xv = val(x);
        Var out = push(Mat::Constant(1, 1, xv.sum()));
        set_back(out, [xi = x.idx](Tape& t, const Mat& g) {
            const Mat& xv2 = t.nodes_[xi].value;
            t.accum(xi, Mat::Constant(xv2.rows(), xv2.cols(), g(0, 0)));
        });
        return out;
    }

    Var mean_all(Var x) {
        const Mat& xv = val(x);
        check(xv.size() > 0, "mean_all: empty input");
        Var out = push(Mat::Constant(1, 1, xv.mean()));
        set_back(out, [xi = x.idx](Tape& t, const Mat& g) {
            const Mat& xv2 = t.nodes_[xi].value;
            const double c = g(0, 0) / static_cast<double>(xv2.size());
            t.accum(xi, Mat::Constant(xv2.rows(), xv2.cols(), c));
        });
        return out;
    }

    // Per-column log(sum_i exp(x_ij)): (R, C) -> (1, C). Stable under shifts.
    Var logsumexp_rows(Var x) {
        Var out = push(vops::logsumexp_rows(val(x)));
        set_back(out, [xi = x.idx, oi = out.idx](Tape& t, const Mat& g) {
            const Mat& xv2 = t.nodes_[xi].value;
            const Mat& yv = t.nodes_[oi].value;
            Mat d(xv2.rows(), xv2.cols());
            for (Eigen::Index j = 0; j < xv2.cols(); ++j) {
                if (yv(0, j) == kNegInf) {
                    d.col(j).setZero();
                } else {
                    d.col(j) = ((xv2.col(j).array() - yv(0, j)).exp() * g(0, j)).matrix();
                }
            }
            t.accum(xi, std::move(d));
        });
        return out;
    }

    // Per-column x - logsumexp(x): (R, C) -> (R, C).
    Var log_softmax_rows(Var x) {
        Var out = push(vops::log_softmax_rows(val(x)));
        set_back(out, [xi = x.idx, oi = out.idx](Tape& t, const Mat& g) {
            const Mat& yv = t.nodes_[oi].value;
            Eigen::VectorXd colsum = g.colwise().sum().transpose();
            Mat d = g - yv.array().exp().matrix() * colsum.asDiagonal();
            t.accum(xi, std::move(d));
        });
        return out;
    }

    // Inverted dropout: kept entries scaled by 1/keep so the expectation is
    // unchanged. Call only on the training path; rate 0 is the identity.
    Var dropout(Var x, double rate, Rng& rng) {
        check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
        if (rate == 0.0) return x;
        const Mat& xv = val(x);
        const double keep = 1.0 - rate;
        auto mask = std::make_shared<Mat>(xv.rows(), xv.cols());
        for (Eigen::Index j = 0; j < xv.cols(); ++j)
            for (Eigen::Index i = 0; i < xv.rows(); ++i)
                (*mask)(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
        Var out = push(xv.cwiseProduct(*mask));
        set_back(out, [xi = x.idx, mask](Tape& t, const Mat& g) {
            t.accum(xi, g.cwiseProduct(*mask));
        });
        return out;
    }

    // Value passthrough that blocks gradient flow into x.
    Var stop_gradient(Var x) { return push(Mat(val(x))); }

    // Seeds the scalar loss with gradient 1 and sweeps the tape in reverse.
    void backward(Var loss) {
        NodeRec& ln = node_mut(loss);
        if (ln.value.rows() != 1 || ln.value.cols() != 1)
            throw UsageError("backward: loss must be a 1x1 scalar");
        ln.grad = Mat::Ones(1, 1);
        for (std::size_t i = loss.idx + 1; i-- > 0;) {
            NodeRec& n = nodes_[i];
            if (n.back && n.grad.size() != 0) n.back(*this, n.grad);
        }
    }

private:
    struct NodeRec {
        Mat value;
        Mat grad;  // empty until first accumulation
        std::function<void(Tape&, const Mat&)> back;
    };

    Var push(Mat value) {
        nodes_.push_back(NodeRec{std::move(value), Mat(), nullptr});
        return Var{this, nodes_.size() - 1};
    }

    void set_back(Var v, std::function<void(Tape&, const Mat&)> f) {
        nodes_[v.idx].back = std::move(f);
    }

    template <typename Expr>
    void accum(std::size_t idx, Expr&& delta) {
        NodeRec& n = nodes_[idx];
        if (n.grad.size() == 0) {
            n.grad = std::forward<Expr>(delta);
        } else {
            n.grad += delta;
        }
    }

    const NodeRec& node(Var v) const {
        if (v.tape != this || v.idx >= nodes_.size()) throw UsageError("tape: foreign or stale var");
        return nodes_[v.idx];
    }

    NodeRec& node_mut(Var v) {
        if (v.tape != this || v.idx >= nodes_.size()) throw UsageError("tape: foreign or stale var");
        return nodes_[v.idx];
    }

    static void check(bool ok, const char* msg) {
        if (!ok) throw UsageError(msg);
    }

    void check_same_shape(Var a, Var b, const char* op) {
        const Mat& av = val(a);
        const Mat& bv = val(b);
        if (av.rows() != bv.rows() || av.cols() != bv.cols())
            throw UsageError(std::string(op) + ": operand shapes differ");
    }

    std::vector<NodeRec> nodes_;
};

// Binds parameter-store entries to tape leaves so a model can build a graph
// and drain gradients back into the store after backward().
class ParamBinder {
public:
    ParamBinder(Tape& tape, ParameterStore& store) : tape_(&tape), store_(&store) {}

    Var operator()(const std::string& name) {
        ParamEntry& e = store_->at(name);
        Var v = tape_->leaf(e.value);
        bound_.emplace_back(&e, v);
        return v;
    }

    // Adds each leaf's gradient onto the store's grad buffers.
    void drain_grads() {
        for (auto& [entry, var] : bound_) entry->grad += tape_->grad_of(var);
    }

private:
    Tape* tape_;
    ParameterStore* store_;
    std::vector<std::pair<ParamEntry*, Var>> bound_;
};

}  // namespace aem
