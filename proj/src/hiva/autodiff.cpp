#include "hiva/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace hiva::ad {

Var Tape::leaf(Mat v, bool needs_grad) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->needs_grad = needs_grad;
    return adopt(std::move(n));
}

void Tape::backward(const Var& root) {
    if (root->val.rows() != 1 || root->val.cols() != 1)
        throw std::invalid_argument("backward: root must be a scalar");
    root->accumulate(Mat::Ones(1, 1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.needs_grad && n.backprop && n.has_grad()) n.backprop();
    }
}

namespace {

Var make(Tape* tape, Mat val, std::initializer_list<Var> parents, std::function<void(Node&)> bp) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    for (const auto& p : parents)
        if (p->needs_grad) n->needs_grad = true;
    if (n->needs_grad) {
        Node* raw = n.get();
        n->backprop = [raw, bp = std::move(bp)]() { bp(*raw); };
    }
    return tape->adopt(std::move(n));
}

}  // namespace

Var add(const Var& a, const Var& b) {
    return make(a->tape, a->val + b->val, {a, b}, [a, b](Node& o) {
        if (a->needs_grad) a->accumulate(o.grad);
        if (b->needs_grad) b->accumulate(o.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    return make(a->tape, a->val - b->val, {a, b}, [a, b](Node& o) {
        if (a->needs_grad) a->accumulate(o.grad);
        if (b->needs_grad) b->accumulate(-o.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    return make(a->tape, a->val.cwiseProduct(b->val), {a, b}, [a, b](Node& o) {
        if (a->needs_grad) a->accumulate(o.grad.cwiseProduct(b->val));
        if (b->needs_grad) b->accumulate(o.grad.cwiseProduct(a->val));
    });
}

Var scale(const Var& a, double s) {
    return make(a->tape, a->val * s, {a}, [a, s](Node& o) { a->accumulate(o.grad * s); });
}

Var matmul(const Var& a, const Var& b) {
    return make(a->tape, a->val * b->val, {a, b}, [a, b](Node& o) {
        if (a->needs_grad) a->accumulate(o.grad * b->val.transpose());
        if (b->needs_grad) b->accumulate(a->val.transpose() * o.grad);
    });
}

Var transpose(const Var& a) {
    return make(a->tape, a->val.transpose(), {a},
                [a](Node& o) { a->accumulate(o.grad.transpose()); });
}

Var add_rowvec(const Var& a, const Var& row) {
    Mat v = a->val;
    v.rowwise() += Eigen::RowVectorXd(row->val.row(0));
    return make(a->tape, std::move(v), {a, row}, [a, row](Node& o) {
        if (a->needs_grad) a->accumulate(o.grad);
        if (row->needs_grad) row->accumulate(o.grad.colwise().sum());
    });
}

Var mul_rowvec(const Var& a, const Var& row) {
    Mat v = a->val;
    v.array().rowwise() *= row->val.row(0).array();
    return make(a->tape, std::move(v), {a, row}, [a, row](Node& o) {
        if (a->needs_grad) {
            Mat g = o.grad;
            g.array().rowwise() *= row->val.row(0).array();
            a->accumulate(g);
        }
        if (row->needs_grad) row->accumulate(o.grad.cwiseProduct(a->val).colwise().sum());
    });
}

Var sigmoid(const Var& a) {
    Mat y = (1.0 / (1.0 + (-a->val.array()).exp())).matrix();
    auto out = make(a->tape, y, {a}, [a](Node& o) {
        a->accumulate(o.grad.cwiseProduct((o.val.array() * (1.0 - o.val.array())).matrix()));
    });
    return out;
}

Var relu(const Var& a) {
    return make(a->tape, a->val.cwiseMax(0.0), {a}, [a](Node& o) {
        Mat mask = (a->val.array() > 0.0).cast<double>();
        a->accumulate(o.grad.cwiseProduct(mask));
    });
}

Var softmax_rows(const Var& a) {
    Mat y(a->val.rows(), a->val.cols());
    for (Eigen::Index i = 0; i < a->val.rows(); ++i) {
        Eigen::ArrayXd r = a->val.row(i).array();
        r -= r.maxCoeff();
        Eigen::ArrayXd e = r.exp();
        y.row(i) = (e / e.sum()).matrix();
    }
    return make(a->tape, std::move(y), {a}, [a](Node& o) {
        Mat g(o.val.rows(), o.val.cols());
        for (Eigen::Index i = 0; i < o.val.rows(); ++i) {
            double dot = o.grad.row(i).dot(o.val.row(i));
            g.row(i) = o.val.row(i).cwiseProduct(
                (o.grad.row(i).array() - dot).matrix());
        }
        a->accumulate(g);
    });
}

Var row_l2_normalize(const Var& a) {
    Mat y = a->val;
    Eigen::VectorXd norms(a->val.rows());
    for (Eigen::Index i = 0; i < a->val.rows(); ++i) {
        double n = a->val.row(i).norm();
        if (n == 0.0) throw std::domain_error("row_l2_normalize: zero-norm row " + std::to_string(i));
        norms(i) = n;
        y.row(i) /= n;
    }
    return make(a->tape, std::move(y), {a}, [a, norms](Node& o) {
        Mat g(o.val.rows(), o.val.cols());
        for (Eigen::Index i = 0; i < o.val.rows(); ++i) {
            double dot = o.grad.row(i).dot(o.val.row(i));
            g.row(i) = (o.grad.row(i) - dot * o.val.row(i)) / norms(i);
        }
        a->accumulate(g);
    });
}

Var standardize_rows(const Var& a, double eps) {
    const Eigen::Index c = a->val.cols();
    Mat y(a->val.rows(), c);
    Eigen::VectorXd inv_std(a->val.rows());
    for (Eigen::Index i = 0; i < a->val.rows(); ++i) {
        double mu = a->val.row(i).mean();
        Eigen::RowVectorXd d = a->val.row(i).array() - mu;
        double var = d.squaredNorm() / static_cast<double>(c);
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        y.row(i) = d * inv_std(i);
    }
    return make(a->tape, std::move(y), {a}, [a, inv_std, c](Node& o) {
        Mat g(o.val.rows(), c);
        for (Eigen::Index i = 0; i < o.val.rows(); ++i) {
            double gmean = o.grad.row(i).mean();
            double gy = o.grad.row(i).dot(o.val.row(i)) / static_cast<double>(c);
            g.row(i) = inv_std(i) * (o.grad.row(i).array() - gmean - o.val.row(i).array() * gy);
        }
        a->accumulate(g);
    });
}

Var sum_all(const Var& a) {
    Mat v(1, 1);
    v(0, 0) = a->val.sum();
    return make(a->tape, v, {a}, [a](Node& o) {
        a->accumulate(Mat::Constant(a->val.rows(), a->val.cols(), o.grad(0, 0)));
    });
}

Var mean_all(const Var& a) {
    double inv = 1.0 / static_cast<double>(a->val.size());
    Mat v(1, 1);
    v(0, 0) = a->val.sum() * inv;
    return make(a->tape, v, {a}, [a, inv](Node& o) {
        a->accumulate(Mat::Constant(a->val.rows(), a->val.cols(), o.grad(0, 0) * inv));
    });
}

Var mean_rows(const Var& a) {
    double inv = 1.0 / static_cast<double>(a->val.rows());
    Mat v = a->val.colwise().sum() * inv;
    return make(a->tape, v, {a}, [a, inv](Node& o) {
        Mat g = (o.grad * inv).replicate(a->val.rows(), 1);
        a->accumulate(g);
    });
}

Var frobenius_sq(const Var& a) {
    Mat v(1, 1);
    v(0, 0) = a->val.squaredNorm();
    return make(a->tape, v, {a},
                [a](Node& o) { a->accumulate(2.0 * o.grad(0, 0) * a->val); });
}

Var slice_rows(const Var& a, Eigen::Index r0, Eigen::Index n) {
    return make(a->tape, a->val.middleRows(r0, n), {a}, [a, r0, n](Node& o) {
        Mat g = Mat::Zero(a->val.rows(), a->val.cols());
        g.middleRows(r0, n) = o.grad;
        a->accumulate(g);
    });
}

Var slice_cols(const Var& a, Eigen::Index c0, Eigen::Index n) {
    return make(a->tape, a->val.middleCols(c0, n), {a}, [a, c0, n](Node& o) {
        Mat g = Mat::Zero(a->val.rows(), a->val.cols());
        g.middleCols(c0, n) = o.grad;
        a->accumulate(g);
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    Eigen::Index rows = 0;
    for (const auto& p : parts) rows += p->val.rows();
    Mat v(rows, parts.front()->val.cols());
    Eigen::Index at = 0;
    bool ng = false;
    for (const auto& p : parts) {
        v.middleRows(at, p->val.rows()) = p->val;
        at += p->val.rows();
        ng = ng || p->needs_grad;
    }
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->needs_grad = ng;
    if (ng) {
        Node* raw = n.get();
        auto ps = parts;
        n->backprop = [raw, ps]() {
            Eigen::Index at = 0;
            for (const auto& p : ps) {
                if (p->needs_grad) p->accumulate(raw->grad.middleRows(at, p->val.rows()));
                at += p->val.rows();
            }
        };
    }
    return parts.front()->tape->adopt(std::move(n));
}

Var concat_cols(const std::vector<Var>& parts) {
    Eigen::Index cols = 0;
    for (const auto& p : parts) cols += p->val.cols();
    Mat v(parts.front()->val.rows(), cols);
    Eigen::Index at = 0;
    bool ng = false;
    for (const auto& p : parts) {
        v.middleCols(at, p->val.cols()) = p->val;
        at += p->val.cols();
        ng = ng || p->needs_grad;
    }
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->needs_grad = ng;
    if (ng) {
        Node* raw = n.get();
        auto ps = parts;
        n->backprop = [raw, ps]() {
            Eigen::Index at = 0;
            for (const auto& p : ps) {
                if (p->needs_grad) p->accumulate(raw->grad.middleCols(at, p->val.cols()));
                at += p->val.cols();
            }
        };
    }
    return parts.front()->tape->adopt(std::move(n));
}

Var gather_rows(const Var& a, std::vector<int> idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), a->val.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = a->val.row(idx[i]);
    return make(a->tape, std::move(v), {a}, [a, idx = std::move(idx)](Node& o) {
        Mat g = Mat::Zero(a->val.rows(), a->val.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += o.grad.row(static_cast<Eigen::Index>(i));
        a->accumulate(g);
    });
}

int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

Var im2col(const Var& a, int h, int w, int k, int stride, int pad) {
    const int c = static_cast<int>(a->val.cols());
    if (a->val.rows() != static_cast<Eigen::Index>(h) * w)
        throw std::invalid_argument("im2col: rows != h*w");
    const int ho = conv_out_dim(h, k, stride, pad);
    const int wo = conv_out_dim(w, k, stride, pad);
    // column layout: (ky, kx, channel)
    Mat v = Mat::Zero(static_cast<Eigen::Index>(ho) * wo, static_cast<Eigen::Index>(k) * k * c);
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
            Eigen::Index row = static_cast<Eigen::Index>(oy) * wo + ox;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    int iy = oy * stride - pad + ky;
                    int ix = ox * stride - pad + kx;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    v.block(row, (static_cast<Eigen::Index>(ky) * k + kx) * c, 1, c) =
                        a->val.row(static_cast<Eigen::Index>(iy) * w + ix);
                }
        }
    return make(a->tape, std::move(v), {a}, [a, h, w, k, stride, pad, c, ho, wo](Node& o) {
        Mat g = Mat::Zero(a->val.rows(), a->val.cols());
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                Eigen::Index row = static_cast<Eigen::Index>(oy) * wo + ox;
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        int iy = oy * stride - pad + ky;
                        int ix = ox * stride - pad + kx;
                        if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                        g.row(static_cast<Eigen::Index>(iy) * w + ix) +=
                            o.grad.block(row, (static_cast<Eigen::Index>(ky) * k + kx) * c, 1, c);
                    }
            }
        a->accumulate(g);
    });
}

Var weighted_bce_logits(const Var& logits, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    if (logits->val.cols() != 1 || logits->val.rows() != y.size() || y.size() != w.size())
        throw std::invalid_argument("weighted_bce_logits: shape mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double z = logits->val(i, 0);
        // max(z,0) - z*y + log(1 + exp(-|z|))
        total += w(i) * (std::max(z, 0.0) - z * y(i) + std::log1p(std::exp(-std::abs(z))));
    }
    Mat v(1, 1);
    v(0, 0) = total;
    return make(logits->tape, v, {logits}, [logits, y, w](Node& o) {
        Mat g(y.size(), 1);
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            double p = 1.0 / (1.0 + std::exp(-logits->val(i, 0)));
            g(i, 0) = w(i) * (p - y(i)) * o.grad(0, 0);
        }
        logits->accumulate(g);
    });
}

}  // namespace hiva::ad
