#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "pnsis/errors.hpp"

namespace pnsis::ad {

using Mat = Eigen::MatrixXd;

// Dense-matrix reverse-accumulation tape. Nodes are created in topological
// order by the op builders below; backward() walks them in reverse. Node
// indices stay valid across tape growth, so closures capture indices only.
class Tape;

struct Node {
    Mat value;
    Mat grad;  // allocated lazily on first accumulation
    std::function<void(Tape&, const Mat&)> back;
};

class Var {
public:
    Var() = default;
    Var(Tape* tape, int index) : tape_(tape), index_(index) {}
    int index() const { return index_; }
    bool valid() const { return tape_ != nullptr; }
    const Mat& val() const;
    Mat grad() const;  // zeros if no gradient reached this node
    double scalar() const;

private:
    Tape* tape_ = nullptr;
    int index_ = -1;
};

class Tape {
public:
    Var leaf(Mat value) {
        nodes_.push_back({std::move(value), {}, nullptr});
        return Var(this, static_cast<int>(nodes_.size()) - 1);
    }

    Var constant(Mat value) { return leaf(std::move(value)); }

    Var scalar(double x) { return leaf(Mat::Constant(1, 1, x)); }

    template <class F>
    Var make(Mat value, F&& back) {
        Var v = leaf(std::move(value));
        nodes_[v.index()].back = std::forward<F>(back);
        return v;
    }

    Node& node(int i) { return nodes_[i]; }
    int size() const { return static_cast<int>(nodes_.size()); }

    void accumulate(int i, const Mat& g) {
        Node& n = nodes_[i];
        if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        n.grad += g;
    }

    // Seeds d(root)/d(root) = 1 (root must be 1x1) and runs the reverse sweep.
    void backward(const Var& root) {
        if (nodes_[root.index()].value.size() != 1)
            throw ArgumentError("backward: root must be a scalar");
        accumulate(root.index(), Mat::Ones(1, 1));
        for (int i = root.index(); i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.back && n.grad.size() != 0) n.back(*this, n.grad);
        }
    }

private:
    std::vector<Node> nodes_;
};

inline const Mat& Var::val() const { return tape_->node(index_).value; }
inline Mat Var::grad() const {
    const Node& n = tape_->node(index_);
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}
inline double Var::scalar() const { return val()(0, 0); }

// ---- elementwise and structural ops ----

inline Var add(Tape& t, Var a, Var b) {
    int ia = a.index(), ib = b.index();
    return t.make(a.val() + b.val(), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, g);
    });
}

inline Var sub(Tape& t, Var a, Var b) {
    int ia = a.index(), ib = b.index();
    return t.make(a.val() - b.val(), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, -g);
    });
}

inline Var scale(Tape& t, Var a, double s) {
    int ia = a.index();
    return t.make(a.val() * s, [ia, s](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g * s);
    });
}

// a + constant (same shape, or a 1x1 `a` against any constant is not allowed;
// shapes must match).
inline Var cadd(Tape& t, Var a, const Mat& c) {
    int ia = a.index();
    return t.make(a.val() + c, [ia](Tape& tp, const Mat& g) { tp.accumulate(ia, g); });
}

// a .* constant
inline Var cmul(Tape& t, Var a, Mat c) {
    int ia = a.index();
    Mat value = a.val().cwiseProduct(c);
    return t.make(std::move(value), [ia, c = std::move(c)](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g.cwiseProduct(c));
    });
}

inline Var hadamard(Tape& t, Var a, Var b) {
    int ia = a.index(), ib = b.index();
    return t.make(a.val().cwiseProduct(b.val()), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g.cwiseProduct(tp.node(ib).value));
        tp.accumulate(ib, g.cwiseProduct(tp.node(ia).value));
    });
}

inline Var matmul(Tape& t, Var a, Var b) {
    int ia = a.index(), ib = b.index();
    return t.make(a.val() * b.val(), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g * tp.node(ib).value.transpose());
        tp.accumulate(ib, tp.node(ia).value.transpose() * g);
    });
}

// constant * a
inline Var cmatmul_left(Tape& t, Mat c, Var a) {
    int ia = a.index();
    Mat value = c * a.val();
    return t.make(std::move(value), [ia, c = std::move(c)](Tape& tp, const Mat& g) {
        tp.accumulate(ia, c.transpose() * g);
    });
}

inline Var transpose(Tape& t, Var a) {
    int ia = a.index();
    return t.make(a.val().transpose(), [ia](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g.transpose());
    });
}

inline Var sigmoid(Tape& t, Var a) {
    int ia = a.index();
    Mat value = a.val().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    int self_hint;
    (void)self_hint;
    Var v = t.make(value, nullptr);
    int iv = v.index();
    t.node(iv).back = [ia, iv](Tape& tp, const Mat& g) {
        const Mat& s = tp.node(iv).value;
        tp.accumulate(ia, g.cwiseProduct(s.cwiseProduct(Mat::Ones(s.rows(), s.cols()) - s)));
    };
    return v;
}

inline Var relu(Tape& t, Var a) {
    int ia = a.index();
    return t.make(a.val().cwiseMax(0.0), [ia](Tape& tp, const Mat& g) {
        const Mat& x = tp.node(ia).value;
        tp.accumulate(ia, (x.array() > 0.0).select(g, Mat::Zero(g.rows(), g.cols())));
    });
}

inline Var abs(Tape& t, Var a) {
    int ia = a.index();
    return t.make(a.val().cwiseAbs(), [ia](Tape& tp, const Mat& g) {
        const Mat& x = tp.node(ia).value;
        tp.accumulate(ia, g.cwiseProduct(x.unaryExpr([](double v) {
            return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        })));
    });
}

// Elementwise power with real exponent. For e == 0 the value is all-ones with
// zero gradient (the 0^0 := 1 convention used by the structure embedding).
inline Var cwise_pow(Tape& t, Var a, double e) {
    int ia = a.index();
    if (e == 0.0) {
        Mat ones = Mat::Ones(a.val().rows(), a.val().cols());
        return t.make(std::move(ones), [](Tape&, const Mat&) {});
    }
    Mat value = a.val().unaryExpr([e](double x) { return std::pow(x, e); });
    return t.make(std::move(value), [ia, e](Tape& tp, const Mat& g) {
        const Mat& x = tp.node(ia).value;
        Mat d = x.unaryExpr([e](double v) { return e * std::pow(v, e - 1.0); });
        tp.accumulate(ia, g.cwiseProduct(d));
    });
}

// ---- reductions and shape ops ----

inline Var rowsum(Tape& t, Var a) {
    int ia = a.index();
    Mat value = a.val().rowwise().sum();
    int cols = static_cast<int>(a.val().cols());
    return t.make(std::move(value), [ia, cols](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g * Mat::Ones(1, cols));
    });
}

inline Var colmean(Tape& t, Var a) {
    int ia = a.index();
    int rows = static_cast<int>(a.val().rows());
    Mat value = a.val().colwise().mean();
    return t.make(std::move(value), [ia, rows](Tape& tp, const Mat& g) {
        tp.accumulate(ia, Mat::Ones(rows, 1) * g / static_cast<double>(rows));
    });
}

inline Var sum_all(Tape& t, Var a) {
    int ia = a.index();
    return t.make(Mat::Constant(1, 1, a.val().sum()), [ia](Tape& tp, const Mat& g) {
        const Mat& x = tp.node(ia).value;
        tp.accumulate(ia, Mat::Constant(x.rows(), x.cols(), g(0, 0)));
    });
}

// Row-broadcast bias add: a is R x C, b is 1 x C.
inline Var add_rowvec(Tape& t, Var a, Var b) {
    int ia = a.index(), ib = b.index();
    Mat value = a.val().rowwise() + b.val().row(0);
    return t.make(std::move(value), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, g.colwise().sum());
    });
}

// 1 x k row vector assembled from scalar nodes; a scalar may appear multiple
// times (its gradient accumulates).
inline Var concat_scalars(Tape& t, const std::vector<Var>& parts) {
    Mat value(1, static_cast<int>(parts.size()));
    std::vector<int> idx(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        value(0, static_cast<int>(i)) = parts[i].scalar();
        idx[i] = parts[i].index();
    }
    return t.make(std::move(value), [idx = std::move(idx)](Tape& tp, const Mat& g) {
        for (std::size_t i = 0; i < idx.size(); ++i)
            tp.accumulate(idx[i], Mat::Constant(1, 1, g(0, static_cast<int>(i))));
    });
}

// Softmax + cross-entropy fused for a 1 x C logit row. Returns -log p[label].
inline Var softmax_cross_entropy(Tape& t, Var logits, int label) {
    int il = logits.index();
    const Mat& z = logits.val();
    double m = z.maxCoeff();
    Eigen::RowVectorXd shifted = z.row(0).array() - m;
    Eigen::RowVectorXd ex = shifted.array().exp();
    double denom = ex.sum();
    Eigen::RowVectorXd p = ex / denom;
    double loss = -(shifted(label) - std::log(denom));
    Mat pmat = p;
    return t.make(Mat::Constant(1, 1, loss),
                  [il, label, pmat = std::move(pmat)](Tape& tp, const Mat& g) {
                      Mat d = pmat;
                      d(0, label) -= 1.0;
                      tp.accumulate(il, d * g(0, 0));
                  });
}

inline Eigen::RowVectorXd softmax_row(const Mat& z) {
    double m = z.maxCoeff();
    Eigen::RowVectorXd ex = (z.row(0).array() - m).exp();
    return ex / ex.sum();
}

// Straight-through 0.5 threshold: forward emits the hard {0,1} matrix, the
// backward pass treats it as identity (gradient of the soft relaxation).
inline Var straight_through(Tape& t, Var soft) {
    int ia = soft.index();
    Mat value = soft.val().unaryExpr([](double x) { return x > 0.5 ? 1.0 : 0.0; });
    return t.make(std::move(value), [ia](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
    });
}

inline void check_finite(const Var& v, const std::string& where) {
    if (!v.val().allFinite())
        throw NumericError("non-finite value at " + where);
}

}  // namespace pnsis::ad
