#pragma once

#include "hiva/config.hpp"
#include "hiva/layers.hpp"

namespace hiva {

enum class AttentionSource { DDCA_v2t, DDCA_t2v, CDCA_t2v, CDCA_v2t };

// Softmax rows of one attention call; each row is a probability vector.
struct AttentionRecord {
    ad::Mat weights;  // [n_query x n_key]
    double scale = 0.0;
    AttentionSource source;
};

struct CrossAttentionOut {
    ad::Var out;  // [n_q x d]
    ad::Var weights;
};

// out = softmax((q Wq)(k Wk)^T / sqrt(d)) (v Wv), row-wise over keys.
CrossAttentionOut scaled_cross_attention(const VarMap& vars, const std::string& prefix,
                                         const ad::Var& queries, const ad::Var& keys,
                                         const ad::Var& values);

struct DdcaForward {
    ad::Var d;                            // [N x d]
    std::vector<AttentionRecord> forward;  // per AU, U_i over its text tokens
    std::vector<AttentionRecord> reverse;  // per AU, Z_i over F_i spatial cells
};

struct CdcaForward {
    ad::Var c;               // [N x d]
    AttentionRecord forward;  // Z rows over spatial tokens [N x HW]
    AttentionRecord reverse;  // spatial tokens over Z rows [HW x N]
};

void init_interact_params(ParamStore& store, Rng& rng, const RunConfig& cfg);

// Strictly per-AU: U_i attends over AU i's projected text tokens, then Z_i
// attends over AU i's spatial map; D_i is the elementwise sum of the two.
DdcaForward ddca(const VarMap& vars, const RunConfig& cfg, const ad::Var& u,
                 const std::vector<ad::Var>& f_maps, const std::vector<ad::Var>& token_feats,
                 const ad::Var& z);

// Z rows query the flattened global map; global tokens query all of Z. The
// pooled refined map is shared across AUs.
CdcaForward cdca(const VarMap& vars, const RunConfig& cfg, const ad::Var& xg_flat,
                 const ad::Var& z);

// h_i = FC([U_i ; D_i ; C_i]); logits from per-AU scalar heads. [N x 1].
ad::Var fuse_and_predict(const VarMap& vars, const RunConfig& cfg, const ad::Var& u,
                         const ad::Var& d_feat, const ad::Var& c_feat);

}  // namespace hiva
