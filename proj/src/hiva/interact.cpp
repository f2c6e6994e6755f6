#include "hiva/interact.hpp"

#include <cmath>

namespace hiva {

using namespace ad;

void init_interact_params(ParamStore& store, Rng& rng, const RunConfig& cfg) {
    // four independent projection sets: local/global x forward/reverse
    for (const char* set : {"ddca.fwd", "ddca.rev", "cdca.fwd", "cdca.rev"}) {
        store.add(std::string(set) + ".wq", glorot(rng, cfg.d, cfg.d));
        store.add(std::string(set) + ".wk", glorot(rng, cfg.d, cfg.d));
        store.add(std::string(set) + ".wv", glorot(rng, cfg.d, cfg.d));
    }
    init_linear(store, rng, "fuse.proj", 3 * cfg.d, cfg.d);
    store.add("head2.w", glorot(rng, cfg.n_aus, cfg.d));
    store.add("head2.b", Mat::Zero(cfg.n_aus, 1));
}

CrossAttentionOut scaled_cross_attention(const VarMap& vars, const std::string& prefix,
                                         const Var& queries, const Var& keys,
                                         const Var& values) {
    if (keys->val.rows() == 0) throw std::invalid_argument("scaled_cross_attention: no keys");
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(queries->val.cols()));
    Var q = matmul(queries, vars.at(prefix + ".wq"));
    Var k = matmul(keys, vars.at(prefix + ".wk"));
    Var v = matmul(values, vars.at(prefix + ".wv"));
    Var w = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt));
    return {matmul(w, v), w};
}

DdcaForward ddca(const VarMap& vars, const RunConfig& cfg, const Var& u,
                 const std::vector<Var>& f_maps, const std::vector<Var>& token_feats,
                 const Var& z) {
    const double sc = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    DdcaForward out;
    std::vector<Var> d_rows;
    for (int i = 0; i < cfg.n_aus; ++i) {
        if (token_feats[i]->val.rows() == 0)
            throw std::invalid_argument("ddca: AU " + std::to_string(i) + " has no tokens");
        Var ui = slice_rows(u, i, 1);
        Var zi = slice_rows(z, i, 1);
        auto fwd = scaled_cross_attention(vars, "ddca.fwd", ui, token_feats[i], token_feats[i]);
        auto rev = scaled_cross_attention(vars, "ddca.rev", zi, f_maps[i], f_maps[i]);
        out.forward.push_back({fwd.weights->val, sc, AttentionSource::DDCA_v2t});
        out.reverse.push_back({rev.weights->val, sc, AttentionSource::DDCA_t2v});
        // U-hat is already a single vector, so the pooling step is the identity
        d_rows.push_back(add(fwd.out, rev.out));
    }
    out.d = concat_rows(d_rows);
    return out;
}

CdcaForward cdca(const VarMap& vars, const RunConfig& cfg, const Var& xg_flat, const Var& z) {
    const double sc = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    auto fwd = scaled_cross_attention(vars, "cdca.fwd", z, xg_flat, xg_flat);
    auto rev = scaled_cross_attention(vars, "cdca.rev", xg_flat, z, z);
    // spatial mean of the refined map, broadcast to every AU
    Var pooled = mean_rows(rev.out);
    Var pooled_rows = concat_rows(std::vector<Var>(cfg.n_aus, pooled));
    CdcaForward out;
    out.c = add(fwd.out, pooled_rows);
    out.forward = {fwd.weights->val, sc, AttentionSource::CDCA_t2v};
    out.reverse = {rev.weights->val, sc, AttentionSource::CDCA_v2t};
    return out;
}

Var fuse_and_predict(const VarMap& vars, const RunConfig& cfg, const Var& u, const Var& d_feat,
                     const Var& c_feat) {
    if (u->val.cols() != d_feat->val.cols() || u->val.cols() != c_feat->val.cols())
        throw std::invalid_argument("fuse_and_predict: width mismatch");
    Var h = linear(vars, "fuse.proj", concat_cols({u, d_feat, c_feat}));
    Var prod = mul(h, vars.at("head2.w"));
    Var ones = u->tape->constant(Mat::Ones(cfg.d, 1));
    return add(matmul(prod, ones), vars.at("head2.b"));
}

}  // namespace hiva
