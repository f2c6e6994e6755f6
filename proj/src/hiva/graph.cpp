#include "hiva/graph.hpp"

#include <algorithm>
#include <cmath>

namespace hiva {

using namespace ad;

void init_branch_params(ParamStore& store, Rng& rng, const RunConfig& cfg) {
    for (int i = 0; i < cfg.n_aus; ++i)
        init_linear(store, rng, "branch." + std::to_string(i), cfg.d, cfg.d);
}

void init_graph_params(ParamStore& store, Rng& rng, const RunConfig& cfg) {
    store.add("gcn.wr", glorot(rng, cfg.d, cfg.d));
    store.add("gcn.wg", glorot(rng, cfg.d, cfg.d));
    store.add("gcn.wm", glorot(rng, cfg.d, cfg.d));
}

void init_stage1_head(ParamStore& store, Rng& rng, const RunConfig& cfg) {
    store.add("head1.w", glorot(rng, cfg.n_aus, cfg.d));  // row i = head for AU i
    store.add("head1.b", Mat::Zero(cfg.n_aus, 1));
}

BranchForward branch_features(const VarMap& vars, const RunConfig& cfg, const Var& xg) {
    BranchForward out;
    std::vector<Var> pooled;
    for (int i = 0; i < cfg.n_aus; ++i) {
        Var fi = linear(vars, "branch." + std::to_string(i), xg);
        out.f.push_back(fi);
        pooled.push_back(mean_rows(fi));
    }
    out.u = concat_rows(pooled);
    return out;
}

Mat pairwise_similarity(const Mat& u) {
    return u * u.transpose();
}

Adjacency build_topk_graph(const Mat& similarity, int k) {
    const int n = static_cast<int>(similarity.rows());
    if (k < 1 || k > n - 1) throw std::invalid_argument("build_topk_graph: k out of range");
    Adjacency adj;
    adj.k = k;
    adj.a = Eigen::MatrixXi::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        std::vector<int> cand;
        cand.reserve(n - 1);
        for (int j = 0; j < n; ++j)
            if (j != i) cand.push_back(j);
        // stable order gives the lower-index tie-break
        std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
            return similarity(i, a) > similarity(i, b);
        });
        for (int t = 0; t < k; ++t) adj.a(i, cand[t]) = 1;
    }
    return adj;
}

Var graph_refine(const VarMap& vars, const Var& u, const Adjacency& adj) {
    const Eigen::Index n = u->val.rows();
    Mat a = adj.a.cast<double>();
    // m = A (U W_r): row i aggregates the transformed neighbor features
    Var transformed = matmul(u, vars.at("gcn.wr"));
    Var m = matmul(u->tape->constant(a), transformed);
    Var gated = matmul(mul(u, sigmoid(m)), vars.at("gcn.wg"));
    Var update = add(gated, matmul(m, vars.at("gcn.wm")));
    (void)n;
    return relu(add(u, update));
}

Var stage1_logits(const VarMap& vars, const RunConfig& cfg, const Var& u_refined) {
    // per-AU dot product = row-wise sum of the elementwise product
    Var prod = mul(u_refined, vars.at("head1.w"));
    Var ones = u_refined->tape->constant(Mat::Ones(cfg.d, 1));
    return add(matmul(prod, ones), vars.at("head1.b"));
}

Var au_loss(const Var& logits, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    return weighted_bce_logits(logits, y, w);
}

double au_loss_from_probs(const Eigen::VectorXd& p, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double eps) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        double pi = std::clamp(p(i), eps, 1.0 - eps);
        total -= w(i) * (y(i) * std::log(pi) + (1.0 - y(i)) * std::log(1.0 - pi));
    }
    return total;
}

Eigen::VectorXd sigmoid_vec(const Eigen::VectorXd& logits) {
    return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
}

}  // namespace hiva
