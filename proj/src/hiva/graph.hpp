#pragma once

#include "hiva/config.hpp"
#include "hiva/layers.hpp"

namespace hiva {

// Directed per-sample top-K graph. a(i,i)=0 and each row sums to k.
struct Adjacency {
    Eigen::MatrixXi a;
    int k = 0;
};

struct BranchForward {
    std::vector<ad::Var> f;  // per AU spatial map [H_f*W_f x C]
    ad::Var u;               // [N x C] pooled vectors
};

void init_branch_params(ParamStore& store, Rng& rng, const RunConfig& cfg);
void init_graph_params(ParamStore& store, Rng& rng, const RunConfig& cfg);
void init_stage1_head(ParamStore& store, Rng& rng, const RunConfig& cfg);

// N independent pointwise-conv branches over X_g, each followed by GAP.
BranchForward branch_features(const VarMap& vars, const RunConfig& cfg, const ad::Var& xg);

// S[i][j] = dot(U_i, U_j); plain value-level helper for graph construction.
ad::Mat pairwise_similarity(const ad::Mat& u);

// Row-wise top-k over off-diagonal similarities, ties broken by lower index.
Adjacency build_topk_graph(const ad::Mat& similarity, int k);

// U_i^upd = relu[U_i + W_g(U_i ⊙ sigmoid(m_i)) + W_m m_i],
// m_i = sum_j a_ij * W_r U_j. The adjacency is a constant per forward pass.
ad::Var graph_refine(const VarMap& vars, const ad::Var& u, const Adjacency& adj);

// Per-AU scalar heads: logit_i = w_i . U_i^upd + b_i. Returns [N x 1] logits.
ad::Var stage1_logits(const VarMap& vars, const RunConfig& cfg, const ad::Var& u_refined);

// Weighted multi-label sigmoid cross entropy from logits.
ad::Var au_loss(const ad::Var& logits, const Eigen::VectorXd& y, const Eigen::VectorXd& w);

// Probability-domain loss value for oracle checks, with clamping at eps.
double au_loss_from_probs(const Eigen::VectorXd& p, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double eps = 1e-7);

Eigen::VectorXd sigmoid_vec(const Eigen::VectorXd& logits);

}  // namespace hiva
