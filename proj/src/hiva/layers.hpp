#pragma once

#include "hiva/params.hpp"

namespace hiva {

// prefix.w [in x out], prefix.b [1 x out]
void init_linear(ParamStore& store, Rng& rng, const std::string& prefix, int in, int out);
ad::Var linear(const VarMap& vars, const std::string& prefix, const ad::Var& x);

// prefix.gamma, prefix.beta [1 x width]
void init_layernorm(ParamStore& store, const std::string& prefix, int width);
ad::Var layernorm(const VarMap& vars, const std::string& prefix, const ad::Var& x);

// Post-LN transformer encoder block: multi-head self-attention + feedforward,
// both with residual connections and layer normalization.
void init_transformer_block(ParamStore& store, Rng& rng, const std::string& prefix, int width);
ad::Var transformer_block(const VarMap& vars, const std::string& prefix, const ad::Var& x,
                          int heads);

ad::Var multihead_self_attention(const VarMap& vars, const std::string& prefix, const ad::Var& x,
                                 int heads);

// Fixed sinusoidal positional table [len x width].
ad::Mat sinusoidal_positions(int len, int width);

}  // namespace hiva
