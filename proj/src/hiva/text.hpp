#pragma once

#include "hiva/config.hpp"
#include "hiva/data.hpp"
#include "hiva/layers.hpp"

#include <map>
#include <string>
#include <vector>

namespace hiva {

// Vocabulary file: one token per line, line index = id. Subword continuation
// pieces carry the "##" prefix.
class Vocab {
public:
    static Vocab load(const std::string& path);
    static Vocab build(const DescriptionSet& set);  // whole-word vocab from a corpus
    void save(const std::string& path) const;

    int size() const { return static_cast<int>(tokens_.size()); }
    int id_of(const std::string& token) const;  // -1 if absent
    const std::string& token(int id) const { return tokens_[id]; }
    int unk_id() const { return unk_id_; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
    int unk_id_ = -1;
};

struct TokenSequence {
    std::vector<int> ids;
    int au_index = -1;
    int variant_index = 0;
};

// Greedy longest-match WordPiece segmentation, lowercased, truncated at
// max_len. Whole words that match no piece map to [UNK].
TokenSequence tokenize(const std::string& description, const Vocab& vocab, int max_len);

// --- text encoder ---
void init_text_params(ParamStore& store, Rng& rng, const RunConfig& cfg);
bool text_param_trainable(const std::string& name, const RunConfig& cfg);

// Token embeddings H_i for one description: [L x d'].
ad::Var encode_tokens(ad::Tape& tape, const VarMap& vars, const RunConfig& cfg,
                      const TokenSequence& seq);

// Row i = mean over AU i's token embeddings -> [N x d'].
ad::Var pool_sentences(const std::vector<ad::Var>& per_au_token_embeddings);

// (1/N^2) * || Hhat Hhat^T - I ||_F^2 with Hhat the row-wise l2 normalization.
ad::Var diff_loss(const ad::Var& sentence_matrix);

// Inter-AU contextualizer: input projection d' -> d, then ctx_layers
// transformer blocks over the N AU rows (no AU positional encoding).
ad::Var contextualize(const VarMap& vars, const RunConfig& cfg, const ad::Var& sentence_matrix);

// Projection of token embeddings into the shared width d for the
// interaction module (reuses the contextualizer input projection).
ad::Var project_tokens(const VarMap& vars, const ad::Var& token_embeddings);

// --- cached inference-time text features ---
struct TextFeatures {
    ad::Mat z;                    // [N x d]
    std::vector<ad::Mat> tokens;  // per AU, [L_i x d]
};

struct TextForward {
    ad::Var h;                    // [N x d']
    ad::Var z;                    // [N x d]
    std::vector<ad::Var> tokens;  // projected to d
    ad::Var l_diff;
};

// One full text pass for the chosen variant per AU (variant -1 = canonical 0).
TextForward text_forward(ad::Tape& tape, const VarMap& vars, const RunConfig& cfg,
                         const DescriptionSet& set, const Vocab& vocab,
                         const std::vector<int>& variant_per_au);

TextFeatures compute_text_features(const ParamStore& store, const RunConfig& cfg,
                                   const DescriptionSet& set, const Vocab& vocab);

void save_text_cache(const std::string& path, const TextFeatures& f,
                     const nlohmann::json& manifest);
// Returns false on manifest mismatch (stale cache).
bool load_text_cache(const std::string& path, const nlohmann::json& expected_manifest,
                     TextFeatures& out);

}  // namespace hiva
