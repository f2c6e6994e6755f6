#include "hiva/layers.hpp"

#include <cmath>

namespace hiva {

using namespace ad;

void init_linear(ParamStore& store, Rng& rng, const std::string& prefix, int in, int out) {
    store.add(prefix + ".w", glorot(rng, in, out));
    store.add(prefix + ".b", Mat::Zero(1, out));
}

Var linear(const VarMap& vars, const std::string& prefix, const Var& x) {
    return add_rowvec(matmul(x, vars.at(prefix + ".w")), vars.at(prefix + ".b"));
}

void init_layernorm(ParamStore& store, const std::string& prefix, int width) {
    store.add(prefix + ".gamma", Mat::Ones(1, width));
    store.add(prefix + ".beta", Mat::Zero(1, width));
}

Var layernorm(const VarMap& vars, const std::string& prefix, const Var& x) {
    return add_rowvec(mul_rowvec(standardize_rows(x), vars.at(prefix + ".gamma")),
                      vars.at(prefix + ".beta"));
}

void init_transformer_block(ParamStore& store, Rng& rng, const std::string& prefix, int width) {
    init_linear(store, rng, prefix + ".wq", width, width);
    init_linear(store, rng, prefix + ".wk", width, width);
    init_linear(store, rng, prefix + ".wv", width, width);
    init_linear(store, rng, prefix + ".wo", width, width);
    init_layernorm(store, prefix + ".ln1", width);
    init_linear(store, rng, prefix + ".ff1", width, 2 * width);
    init_linear(store, rng, prefix + ".ff2", 2 * width, width);
    init_layernorm(store, prefix + ".ln2", width);
}

Var multihead_self_attention(const VarMap& vars, const std::string& prefix, const Var& x,
                             int heads) {
    const Eigen::Index width = x->val.cols();
    const Eigen::Index dh = width / heads;
    Var q = linear(vars, prefix + ".wq", x);
    Var k = linear(vars, prefix + ".wk", x);
    Var v = linear(vars, prefix + ".wv", x);
    std::vector<Var> outs;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < heads; ++h) {
        Var qh = slice_cols(q, h * dh, dh);
        Var kh = slice_cols(k, h * dh, dh);
        Var vh = slice_cols(v, h * dh, dh);
        Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        outs.push_back(matmul(softmax_rows(scores), vh));
    }
    return linear(vars, prefix + ".wo", concat_cols(outs));
}

Var transformer_block(const VarMap& vars, const std::string& prefix, const Var& x, int heads) {
    Var a = layernorm(vars, prefix + ".ln1",
                      add(x, multihead_self_attention(vars, prefix, x, heads)));
    Var f = linear(vars, prefix + ".ff2", relu(linear(vars, prefix + ".ff1", a)));
    return layernorm(vars, prefix + ".ln2", add(a, f));
}

Mat sinusoidal_positions(int len, int width) {
    Mat p(len, width);
    for (int pos = 0; pos < len; ++pos)
        for (int i = 0; i < width; ++i) {
            double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / width);
            p(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return p;
}

}  // namespace hiva
