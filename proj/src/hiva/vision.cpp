#include "hiva/vision.hpp"

#include <cmath>

namespace hiva {

using namespace ad;

namespace {

std::vector<int> toy_channels(int c_raw) {
    return {std::max(8, c_raw / 4), std::max(8, c_raw / 2), c_raw};
}

int window_size(int grid) {
    if (grid % 7 == 0) return 7;
    if (grid % 4 == 0 && grid > 4) return 4;
    if (grid % 2 == 0 && grid > 2) return 2;
    return grid;
}

// window-major permutation of a [g*g] token grid, with optional cyclic shift
std::vector<int> window_permutation(int g, int m, int shift) {
    std::vector<int> perm;
    perm.reserve(static_cast<std::size_t>(g) * g);
    for (int wy = 0; wy < g / m; ++wy)
        for (int wx = 0; wx < g / m; ++wx)
            for (int y = 0; y < m; ++y)
                for (int x = 0; x < m; ++x) {
                    int iy = ((wy * m + y + shift) % g + g) % g;
                    int ix = ((wx * m + x + shift) % g + g) % g;
                    perm.push_back(iy * g + ix);
                }
    return perm;
}

std::vector<int> invert(const std::vector<int>& p) {
    std::vector<int> inv(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = static_cast<int>(i);
    return inv;
}

Var windowed_attention(const VarMap& vars, const std::string& prefix, const Var& x, int g,
                       int m, int shift) {
    auto perm = window_permutation(g, m, shift);
    Var xp = gather_rows(x, perm);
    Var q = linear(vars, prefix + ".wq", xp);
    Var k = linear(vars, prefix + ".wk", xp);
    Var v = linear(vars, prefix + ".wv", xp);
    const int tokens = m * m;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(x->val.cols()));
    std::vector<Var> outs;
    for (int w = 0; w < (g / m) * (g / m); ++w) {
        Var qw = slice_rows(q, static_cast<Eigen::Index>(w) * tokens, tokens);
        Var kw = slice_rows(k, static_cast<Eigen::Index>(w) * tokens, tokens);
        Var vw = slice_rows(v, static_cast<Eigen::Index>(w) * tokens, tokens);
        Var scores = scale(matmul(qw, transpose(kw)), inv_sqrt);
        outs.push_back(matmul(softmax_rows(scores), vw));
    }
    Var merged = linear(vars, prefix + ".wo", concat_rows(outs));
    return gather_rows(merged, invert(perm));
}

// pre-LN swin-style block
Var swin_block(const VarMap& vars, const std::string& prefix, const Var& x, int g, int m,
               int shift) {
    Var a = add(x, windowed_attention(vars, prefix, layernorm(vars, prefix + ".ln1", x), g, m,
                                      shift));
    Var h = layernorm(vars, prefix + ".ln2", a);
    return add(a, linear(vars, prefix + ".ff2", relu(linear(vars, prefix + ".ff1", h))));
}

void init_swin_block(ParamStore& store, Rng& rng, const std::string& prefix, int width) {
    init_linear(store, rng, prefix + ".wq", width, width);
    init_linear(store, rng, prefix + ".wk", width, width);
    init_linear(store, rng, prefix + ".wv", width, width);
    init_linear(store, rng, prefix + ".wo", width, width);
    init_layernorm(store, prefix + ".ln1", width);
    init_linear(store, rng, prefix + ".ff1", width, 2 * width);
    init_linear(store, rng, prefix + ".ff2", 2 * width, width);
    init_layernorm(store, prefix + ".ln2", width);
}

}  // namespace

std::vector<int> swin_stage_widths(int c_raw) {
    return {std::max(4, c_raw / 8), std::max(4, c_raw / 4), std::max(4, c_raw / 2), c_raw};
}

void init_vision_params(ParamStore& store, Rng& rng, const RunConfig& cfg) {
    if (cfg.backbone == "toy-conv") {
        auto ch = toy_channels(cfg.c_raw);
        int c_in = 3;
        for (std::size_t l = 0; l < ch.size(); ++l) {
            init_linear(store, rng, "vision.conv" + std::to_string(l), 3 * 3 * c_in, ch[l]);
            c_in = ch[l];
        }
    } else {
        auto widths = swin_stage_widths(cfg.c_raw);
        init_linear(store, rng, "vision.patch_embed", 4 * 4 * 3, widths[0]);
        for (std::size_t s = 0; s < widths.size(); ++s) {
            for (int b = 0; b < 2; ++b)
                init_swin_block(store, rng,
                                "vision.stage" + std::to_string(s) + ".block" + std::to_string(b),
                                widths[s]);
            if (s + 1 < widths.size())
                init_linear(store, rng, "vision.merge" + std::to_string(s), 4 * widths[s],
                            widths[s + 1]);
        }
    }
    init_linear(store, rng, "vision.proj", cfg.c_raw, cfg.d);
}

VisionForward vision_forward(Tape& tape, const VarMap& vars, const RunConfig& cfg,
                             const Mat& image) {
    return vision_forward(vars, cfg, tape.constant(image));
}

VisionForward vision_forward(const VarMap& vars, const RunConfig& cfg, const Var& image) {
    if (image->val.rows() != static_cast<Eigen::Index>(cfg.image_size) * cfg.image_size ||
        image->val.cols() != 3)
        throw std::invalid_argument("vision_forward: image shape mismatch");
    VisionForward out;
    Var x = image;
    if (cfg.backbone == "toy-conv") {
        auto ch = toy_channels(cfg.c_raw);
        int size = cfg.image_size;
        for (std::size_t l = 0; l < ch.size(); ++l) {
            x = relu(linear(vars, "vision.conv" + std::to_string(l),
                            im2col(x, size, size, 3, 2, 1)));
            size = conv_out_dim(size, 3, 2, 1);
        }
        out.h_f = out.w_f = size;
    } else {
        auto widths = swin_stage_widths(cfg.c_raw);
        int g = cfg.image_size / 4;
        x = linear(vars, "vision.patch_embed", im2col(x, cfg.image_size, cfg.image_size, 4, 4, 0));
        for (std::size_t s = 0; s < widths.size(); ++s) {
            int m = window_size(g);
            x = swin_block(vars, "vision.stage" + std::to_string(s) + ".block0", x, g, m, 0);
            x = swin_block(vars, "vision.stage" + std::to_string(s) + ".block1", x, g, m, m / 2);
            if (s + 1 < widths.size()) {
                x = linear(vars, "vision.merge" + std::to_string(s), im2col(x, g, g, 2, 2, 0));
                g /= 2;
            }
        }
        out.h_f = out.w_f = g;
    }
    out.raw = x;
    out.xg = linear(vars, "vision.proj", x);
    out.stride = cfg.image_size / out.h_f;
    return out;
}

}  // namespace hiva
