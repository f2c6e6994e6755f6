#include "hiva/model.hpp"

namespace hiva {

using namespace ad;

Model Model::init(const RunConfig& cfg) {
    if (cfg.vocab_size < 1) throw std::invalid_argument("Model::init: vocab_size not set");
    Model m;
    m.cfg = cfg;
    Rng rng(Rng::derive(cfg.seed, 0x1717));
    init_vision_params(m.params, rng, cfg);
    init_branch_params(m.params, rng, cfg);
    init_graph_params(m.params, rng, cfg);
    init_stage1_head(m.params, rng, cfg);
    init_text_params(m.params, rng, cfg);
    init_interact_params(m.params, rng, cfg);
    return m;
}

bool Model::trainable(const std::string& name, int stage) const {
    auto starts = [&name](const char* p) { return name.rfind(p, 0) == 0; };
    if (stage == 1)
        return starts("vision.") || starts("branch.") || starts("gcn.") || starts("head1.");
    if (starts("vision.")) return true;
    if (starts("text.")) return text_param_trainable(name, cfg);
    return starts("ddca.") || starts("cdca.") || starts("fuse.") || starts("head2.");
}

Stage1Forward stage1_forward(Tape& tape, const VarMap& vars, const RunConfig& cfg,
                             const Mat& image) {
    Stage1Forward out;
    out.vis = vision_forward(tape, vars, cfg, image);
    out.branches = branch_features(vars, cfg, out.vis.xg);
    out.similarity = pairwise_similarity(out.branches.u->val);
    out.adj = build_topk_graph(out.similarity, cfg.k);
    out.u_refined = graph_refine(vars, out.branches.u, out.adj);
    out.logits = stage1_logits(vars, cfg, out.u_refined);
    return out;
}

FusedForward fused_forward(Tape& tape, const VarMap& vars, const RunConfig& cfg,
                           const Mat& image, const std::vector<Var>& token_feats, const Var& z,
                           const AblationFlags& ablation) {
    FusedForward out;
    out.vis = vision_forward(tape, vars, cfg, image);
    out.branches = branch_features(vars, cfg, out.vis.xg);
    const bool text_off = ablation.no_text;

    Var d_feat, c_feat;
    if (!text_off && !ablation.no_ddca) {
        DdcaForward dd = ddca(vars, cfg, out.branches.u, out.branches.f, token_feats, z);
        d_feat = dd.d;
        out.ddca_forward = std::move(dd.forward);
        out.ddca_reverse = std::move(dd.reverse);
    } else {
        d_feat = tape.zeros(cfg.n_aus, cfg.d);
    }
    if (!text_off && !ablation.no_cdca) {
        CdcaForward cd = cdca(vars, cfg, out.vis.xg, z);
        c_feat = cd.c;
        out.cdca_forward = std::move(cd.forward);
        out.cdca_reverse = std::move(cd.reverse);
    } else {
        c_feat = tape.zeros(cfg.n_aus, cfg.d);
    }
    out.logits = fuse_and_predict(vars, cfg, out.branches.u, d_feat, c_feat);
    return out;
}

}  // namespace hiva
