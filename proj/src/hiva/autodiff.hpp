#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hiva::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// One value in the computation graph. Nodes are created through Tape and the
// op functions below; creation order is a valid topological order.
struct Node {
    Mat val;
    Mat grad;  // allocated on first accumulation
    bool needs_grad = false;
    std::function<void()> backprop;
    Tape* tape = nullptr;

    void accumulate(const Mat& g) {
        if (grad.size() == 0) grad = Mat::Zero(val.rows(), val.cols());
        grad += g;
    }
    bool has_grad() const { return grad.size() != 0; }
};

using Var = std::shared_ptr<Node>;

// Owns the nodes of one forward pass. A fresh tape is built per batch and
// discarded after the optimizer step.
class Tape {
public:
    Var leaf(Mat v, bool needs_grad = false);
    Var constant(Mat v) { return leaf(std::move(v), false); }
    Var zeros(Eigen::Index rows, Eigen::Index cols) { return constant(Mat::Zero(rows, cols)); }

    Var adopt(Var n) {
        n->tape = this;
        nodes_.push_back(n);
        return n;
    }

    // Reverse accumulation from a 1x1 root.
    void backward(const Var& root);

    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<Var> nodes_;
};

// --- elementwise / arithmetic ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);        // elementwise
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add_rowvec(const Var& a, const Var& row);   // broadcast [1 x C] over rows
Var mul_rowvec(const Var& a, const Var& row);

// --- nonlinearities ---
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var softmax_rows(const Var& a);

// --- normalization ---
Var row_l2_normalize(const Var& a);             // errors on a zero-norm row
Var standardize_rows(const Var& a, double eps = 1e-6);

// --- reductions ---
Var sum_all(const Var& a);                      // -> 1x1
Var mean_all(const Var& a);                     // -> 1x1
Var mean_rows(const Var& a);                    // [R x C] -> [1 x C]
Var frobenius_sq(const Var& a);                 // -> 1x1

// --- shape ---
Var slice_rows(const Var& a, Eigen::Index r0, Eigen::Index n);
Var slice_cols(const Var& a, Eigen::Index c0, Eigen::Index n);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(const Var& a, std::vector<int> idx);

// im2col over a [H*W x C] row-major spatial layout (row = y*W + x), zero
// padding. Output is [Ho*Wo x k*k*C] so a convolution becomes a matmul.
Var im2col(const Var& a, int h, int w, int k, int stride, int pad);

// Weighted multi-label sigmoid cross entropy from logits [N x 1], computed in
// the numerically stable form. y and w are constants.
Var weighted_bce_logits(const Var& logits, const Eigen::VectorXd& y, const Eigen::VectorXd& w);

int conv_out_dim(int in, int k, int stride, int pad);

}  // namespace hiva::ad
