#pragma once

#include "hiva/config.hpp"
#include "hiva/layers.hpp"

namespace hiva {

// Global feature map plus the metadata needed to render attention back into
// image coordinates.
struct VisionForward {
    ad::Var raw;  // [H_f*W_f x C_raw]
    ad::Var xg;   // [H_f*W_f x d], pointwise projection of raw
    int h_f = 0;
    int w_f = 0;
    int stride = 0;  // image pixels per feature cell
};

void init_vision_params(ParamStore& store, Rng& rng, const RunConfig& cfg);

VisionForward vision_forward(ad::Tape& tape, const VarMap& vars, const RunConfig& cfg,
                             const ad::Mat& image);
// Same pass over an image that is already a graph node (e.g. a probe image
// needing gradients).
VisionForward vision_forward(const VarMap& vars, const RunConfig& cfg, const ad::Var& image);

// Backbone stage widths used by the swin-like path (final equals c_raw).
std::vector<int> swin_stage_widths(int c_raw);

}  // namespace hiva
