#pragma once

#include "hiva/graph.hpp"
#include "hiva/interact.hpp"
#include "hiva/text.hpp"
#include "hiva/vision.hpp"

namespace hiva {

// The full parameter set plus stage-wise trainability rules.
struct Model {
    RunConfig cfg;
    ParamStore params;

    static Model init(const RunConfig& cfg);

    // stage 1: vision + branches + graph + stage-1 head
    // stage 2: vision + text (last-k encoder layers) + interaction + fusion
    bool trainable(const std::string& name, int stage) const;
};

// One stage-2 / inference forward pass for a single sample. Text inputs may
// be live graph nodes (training) or cached constants (inference).
struct FusedForward {
    VisionForward vis;
    BranchForward branches;
    ad::Var logits;  // [N x 1]
    std::vector<AttentionRecord> ddca_forward;
    std::vector<AttentionRecord> ddca_reverse;
    std::optional<AttentionRecord> cdca_forward;
    std::optional<AttentionRecord> cdca_reverse;
};

FusedForward fused_forward(ad::Tape& tape, const VarMap& vars, const RunConfig& cfg,
                           const ad::Mat& image, const std::vector<ad::Var>& token_feats,
                           const ad::Var& z, const AblationFlags& ablation);

// Stage-1 forward: vision -> branches -> top-K graph -> refine -> head.
struct Stage1Forward {
    VisionForward vis;
    BranchForward branches;
    ad::Mat similarity;
    Adjacency adj;
    ad::Var u_refined;
    ad::Var logits;  // [N x 1]
};

Stage1Forward stage1_forward(ad::Tape& tape, const VarMap& vars, const RunConfig& cfg,
                             const ad::Mat& image);

}  // namespace hiva
