#include "hiva/text.hpp"

#include <cctype>
#include <fstream>
#include <set>

namespace hiva {

using namespace ad;

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("vocab file not found: " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        v.index_.emplace(line, static_cast<int>(v.tokens_.size()));
        v.tokens_.push_back(line);
    }
    v.unk_id_ = v.id_of("[UNK]");
    if (v.unk_id_ < 0) throw ParseError("vocab has no [UNK] token: " + path);
    return v;
}

Vocab Vocab::build(const DescriptionSet& set) {
    std::set<std::string> words;
    for (const auto& variants : set.variants)
        for (const auto& text : variants) {
            std::string word;
            for (char ch : text) {
                if (std::isalnum(static_cast<unsigned char>(ch))) {
                    word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
                } else {
                    if (!word.empty()) words.insert(word), word.clear();
                    if (!std::isspace(static_cast<unsigned char>(ch))) words.insert(std::string(1, ch));
                }
            }
            if (!word.empty()) words.insert(word);
        }
    Vocab v;
    for (const auto& t : std::vector<std::string>{"[PAD]", "[UNK]"}) {
        v.index_.emplace(t, static_cast<int>(v.tokens_.size()));
        v.tokens_.push_back(t);
    }
    for (const auto& w : words) {
        v.index_.emplace(w, static_cast<int>(v.tokens_.size()));
        v.tokens_.push_back(w);
    }
    v.unk_id_ = v.id_of("[UNK]");
    return v;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write vocab: " + path);
    for (const auto& t : tokens_) out << t << "\n";
}

int Vocab::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
}

TokenSequence tokenize(const std::string& description, const Vocab& vocab, int max_len) {
    if (description.empty()) throw ParseError("tokenize: empty description");
    std::vector<std::string> words;
    std::string word;
    for (char ch : description) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else {
            if (!word.empty()) words.push_back(word), word.clear();
            if (!std::isspace(static_cast<unsigned char>(ch))) words.push_back(std::string(1, ch));
        }
    }
    if (!word.empty()) words.push_back(word);

    TokenSequence seq;
    for (const auto& w : words) {
        if (static_cast<int>(seq.ids.size()) >= max_len) break;
        // greedy longest-match WordPiece
        std::vector<int> pieces;
        std::size_t at = 0;
        bool ok = true;
        while (at < w.size()) {
            std::size_t len = w.size() - at;
            int id = -1;
            while (len > 0) {
                std::string cand = (at == 0 ? "" : "##") + w.substr(at, len);
                id = vocab.id_of(cand);
                if (id >= 0) break;
                --len;
            }
            if (id < 0) {
                ok = false;
                break;
            }
            pieces.push_back(id);
            at += len;
        }
        if (!ok) {
            seq.ids.push_back(vocab.unk_id());
        } else {
            for (int id : pieces) {
                if (static_cast<int>(seq.ids.size()) >= max_len) break;
                seq.ids.push_back(id);
            }
        }
    }
    if (seq.ids.empty()) seq.ids.push_back(vocab.unk_id());
    return seq;
}

void init_text_params(ParamStore& store, Rng& rng, const RunConfig& cfg) {
    store.add("text.enc.embed", glorot(rng, cfg.vocab_size, cfg.d_text));
    for (int l = 0; l < cfg.encoder_layers; ++l)
        init_transformer_block(store, rng, "text.enc.layer" + std::to_string(l), cfg.d_text);
    init_linear(store, rng, "text.proj", cfg.d_text, cfg.d);
    for (int l = 0; l < cfg.ctx_layers; ++l)
        init_transformer_block(store, rng, "text.ctx.layer" + std::to_string(l), cfg.d);
}

bool text_param_trainable(const std::string& name, const RunConfig& cfg) {
    if (name.rfind("text.enc.layer", 0) == 0) {
        int layer = std::stoi(name.substr(std::string("text.enc.layer").size()));
        return layer >= cfg.encoder_layers - cfg.trainable_last;
    }
    if (name == "text.enc.embed") return false;  // pretrained-table contract
    return name.rfind("text.", 0) == 0;
}

Var encode_tokens(Tape& tape, const VarMap& vars, const RunConfig& cfg,
                  const TokenSequence& seq) {
    Var x = gather_rows(vars.at("text.enc.embed"), seq.ids);
    x = add(x, tape.constant(sinusoidal_positions(static_cast<int>(seq.ids.size()), cfg.d_text)));
    for (int l = 0; l < cfg.encoder_layers; ++l)
        x = transformer_block(vars, "text.enc.layer" + std::to_string(l), x, cfg.encoder_heads);
    return x;
}

Var pool_sentences(const std::vector<Var>& per_au_token_embeddings) {
    std::vector<Var> rows;
    rows.reserve(per_au_token_embeddings.size());
    for (const auto& e : per_au_token_embeddings) rows.push_back(mean_rows(e));
    return concat_rows(rows);
}

Var diff_loss(const Var& sentence_matrix) {
    const Eigen::Index n = sentence_matrix->val.rows();
    Var hn = row_l2_normalize(sentence_matrix);
    Var gram = matmul(hn, transpose(hn));
    Var diff = sub(gram, sentence_matrix->tape->constant(Mat::Identity(n, n)));
    return scale(frobenius_sq(diff), 1.0 / static_cast<double>(n * n));
}

Var contextualize(const VarMap& vars, const RunConfig& cfg, const Var& sentence_matrix) {
    Var z = linear(vars, "text.proj", sentence_matrix);
    for (int l = 0; l < cfg.ctx_layers; ++l)
        z = transformer_block(vars, "text.ctx.layer" + std::to_string(l), z, cfg.ctx_heads);
    return z;
}

Var project_tokens(const VarMap& vars, const Var& token_embeddings) {
    return linear(vars, "text.proj", token_embeddings);
}

TextForward text_forward(Tape& tape, const VarMap& vars, const RunConfig& cfg,
                         const DescriptionSet& set, const Vocab& vocab,
                         const std::vector<int>& variant_per_au) {
    std::vector<Var> token_embeds;
    std::vector<Var> projected;
    for (std::size_t i = 0; i < set.au_ids.size(); ++i) {
        int variant = variant_per_au.empty() ? 0 : variant_per_au[i];
        TokenSequence seq = tokenize(set.variants[i][variant], vocab, cfg.max_len);
        seq.au_index = static_cast<int>(i);
        seq.variant_index = variant;
        Var emb = encode_tokens(tape, vars, cfg, seq);
        token_embeds.push_back(emb);
        projected.push_back(project_tokens(vars, emb));
    }
    TextForward out;
    out.h = pool_sentences(token_embeds);
    out.l_diff = diff_loss(out.h);
    out.z = contextualize(vars, cfg, out.h);
    out.tokens = std::move(projected);
    return out;
}

TextFeatures compute_text_features(const ParamStore& store, const RunConfig& cfg,
                                   const DescriptionSet& set, const Vocab& vocab) {
    Tape tape;
    VarMap vars = bind_params(tape, store, /*needs_grad=*/false);
    TextForward fwd = text_forward(tape, vars, cfg, set, vocab, {});
    TextFeatures f;
    f.z = fwd.z->val;
    for (const auto& t : fwd.tokens) f.tokens.push_back(t->val);
    return f;
}

namespace {

void write_mat(std::ofstream& out, const Mat& m) {
    std::int64_t r = m.rows(), c = m.cols();
    out.write(reinterpret_cast<const char*>(&r), sizeof r);
    out.write(reinterpret_cast<const char*>(&c), sizeof c);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            double v = m(i, j);
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
}

Mat read_mat(std::ifstream& in) {
    std::int64_t r = 0, c = 0;
    in.read(reinterpret_cast<char*>(&r), sizeof r);
    in.read(reinterpret_cast<char*>(&c), sizeof c);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            double v;
            in.read(reinterpret_cast<char*>(&v), sizeof v);
            m(i, j) = v;
        }
    return m;
}

}  // namespace

void save_text_cache(const std::string& path, const TextFeatures& f,
                     const nlohmann::json& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write text cache: " + path);
    const char magic[8] = {'H', 'I', 'V', 'A', 'T', 'X', 'T', '1'};
    out.write(magic, 8);
    std::int64_t n = static_cast<std::int64_t>(f.tokens.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    write_mat(out, f.z);
    for (const auto& t : f.tokens) write_mat(out, t);
    std::ofstream mf(path + ".manifest.json");
    mf << manifest.dump(2) << "\n";
}

bool load_text_cache(const std::string& path, const nlohmann::json& expected_manifest,
                     TextFeatures& out_features) {
    std::ifstream mf(path + ".manifest.json");
    if (!mf) return false;
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception&) {
        return false;
    }
    if (manifest != expected_manifest) return false;
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char magic[8];
    in.read(magic, 8);
    if (std::string(magic, 8) != "HIVATXT1") return false;
    std::int64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    out_features.z = read_mat(in);
    out_features.tokens.clear();
    for (std::int64_t i = 0; i < n; ++i) out_features.tokens.push_back(read_mat(in));
    return static_cast<bool>(in);
}

}  // namespace hiva
