#include "hiva/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace hiva {

using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

int levenshtein(const std::string& a, const std::string& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                               prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

void reject_unknown(const json& obj, const std::string& path,
                    const std::vector<std::string>& known) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find(known.begin(), known.end(), key) != known.end()) continue;
        std::string best;
        int best_d = 1 << 20;
        for (const auto& k : known) {
            int d = levenshtein(key, k);
            if (d < best_d) best_d = d, best = k;
        }
        std::string msg = "unknown key";
        if (!best.empty() && best_d <= static_cast<int>(best.size()))
            msg += "; did you mean '" + best + "'?";
        fail(path.empty() ? key : path + "." + key, msg);
    }
}

template <typename T>
void get(const json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(path + "." + key, "wrong type");
    }
}

void parse_stage(const json& obj, const std::string& path, StageSpec& s) {
    reject_unknown(obj, path, {"lr", "epochs"});
    get(obj, path, "lr", s.lr);
    get(obj, path, "epochs", s.epochs);
    if (s.lr <= 0) fail(path + ".lr", "must be > 0");
    if (s.epochs < 1) fail(path + ".epochs", "must be >= 1");
}

}  // namespace

int RunConfig::feature_hw() const {
    if (backbone == "toy-conv") return std::max(1, image_size / 8);
    return std::max(1, image_size / 32);  // swin-like: patch 4 + three merges
}

json RunConfig::to_json() const {
    json j;
    j["model"] = {{"n_aus", n_aus},       {"d", d},
                  {"d_text", d_text},     {"c_raw", c_raw},
                  {"image_size", image_size}, {"backbone", backbone}};
    j["text"] = {{"max_len", max_len},
                 {"encoder_layers", encoder_layers},
                 {"trainable_last", trainable_last},
                 {"encoder_heads", encoder_heads},
                 {"ctx_layers", ctx_layers},
                 {"ctx_heads", ctx_heads}};
    j["graph"] = {{"k", k}};
    j["loss"] = {{"lambda", lambda}};
    j["train"] = {{"seed", seed},
                  {"batch_size", batch_size},
                  {"stage1", {{"lr", stage1.lr}, {"epochs", stage1.epochs}}},
                  {"stage2", {{"lr", stage2.lr}, {"epochs", stage2.epochs}}}};
    j["eval"] = {{"threshold", threshold}};
    json data = {{"dir", data_dir}, {"descriptions", descriptions_path}, {"vocab", vocab_path}};
    if (synthetic) {
        json s = {{"n_samples", synthetic->n_samples},
                  {"seed", synthetic->seed},
                  {"base_rate", synthetic->base_rate}};
        if (!synthetic->regions.empty()) {
            json rs = json::array();
            for (const auto& r : synthetic->regions) rs.push_back({r[0], r[1], r[2], r[3]});
            s["regions"] = rs;
        }
        if (!synthetic->cooccurrence.empty()) s["cooccurrence"] = synthetic->cooccurrence;
        data["synthetic"] = s;
    }
    j["data"] = data;
    j["ablation"] = {{"no_ddca", ablation.no_ddca},
                     {"no_cdca", ablation.no_cdca},
                     {"no_text", ablation.no_text},
                     {"no_aug", ablation.no_aug},
                     {"no_diff_loss", ablation.no_diff_loss}};
    return j;
}

std::uint64_t RunConfig::hash() const {
    // ablation flags are run-time toggles, not part of the model identity,
    // so checkpoints stay loadable across ablation variants
    json j = to_json();
    j.erase("ablation");
    std::string s = j.dump();
    return fnv1a64(s.data(), s.size());
}

RunConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config root must be an object");
    RunConfig c;
    reject_unknown(doc, "", {"model", "text", "graph", "loss", "train", "eval", "data", "ablation"});

    if (doc.contains("model")) {
        const json& m = doc["model"];
        reject_unknown(m, "model", {"n_aus", "d", "d_text", "c_raw", "image_size", "backbone"});
        get(m, "model", "n_aus", c.n_aus);
        get(m, "model", "d", c.d);
        get(m, "model", "d_text", c.d_text);
        get(m, "model", "c_raw", c.c_raw);
        get(m, "model", "image_size", c.image_size);
        get(m, "model", "backbone", c.backbone);
        if (c.n_aus < 2) fail("model.n_aus", "must be >= 2");
        if (c.d < 1) fail("model.d", "must be >= 1");
        if (c.d_text < 1) fail("model.d_text", "must be >= 1");
        if (c.c_raw < 1) fail("model.c_raw", "must be >= 1");
        if (c.image_size < 8) fail("model.image_size", "must be >= 8");
        if (c.backbone != "toy-conv" && c.backbone != "swin-like")
            fail("model.backbone", "must be 'toy-conv' or 'swin-like'");
    }
    if (doc.contains("text")) {
        const json& t = doc["text"];
        reject_unknown(t, "text",
                       {"max_len", "encoder_layers", "trainable_last", "encoder_heads",
                        "ctx_layers", "ctx_heads"});
        get(t, "text", "max_len", c.max_len);
        get(t, "text", "encoder_layers", c.encoder_layers);
        get(t, "text", "trainable_last", c.trainable_last);
        get(t, "text", "encoder_heads", c.encoder_heads);
        get(t, "text", "ctx_layers", c.ctx_layers);
        get(t, "text", "ctx_heads", c.ctx_heads);
        if (c.max_len < 1) fail("text.max_len", "must be >= 1");
        if (c.encoder_layers < 1) fail("text.encoder_layers", "must be >= 1");
        if (c.trainable_last < 0 || c.trainable_last > c.encoder_layers)
            fail("text.trainable_last", "must be in [0, encoder_layers]");
        if (c.encoder_heads < 1 || c.d_text % c.encoder_heads != 0)
            fail("text.encoder_heads", "must divide model.d_text");
        if (c.ctx_layers < 1) fail("text.ctx_layers", "must be >= 1");
        if (c.ctx_heads < 1 || c.d % c.ctx_heads != 0)
            fail("text.ctx_heads", "must divide model.d");
    }
    if (doc.contains("graph")) {
        const json& g = doc["graph"];
        reject_unknown(g, "graph", {"k"});
        get(g, "graph", "k", c.k);
    }
    if (c.k < 1 || c.k > c.n_aus - 1) fail("graph.k", "must be in [1, n_aus-1]");
    if (doc.contains("loss")) {
        const json& l = doc["loss"];
        reject_unknown(l, "loss", {"lambda"});
        get(l, "loss", "lambda", c.lambda);
        if (c.lambda < 0) fail("loss.lambda", "must be >= 0");
    }
    if (doc.contains("train")) {
        const json& t = doc["train"];
        reject_unknown(t, "train", {"seed", "batch_size", "stage1", "stage2"});
        get(t, "train", "seed", c.seed);
        get(t, "train", "batch_size", c.batch_size);
        if (c.batch_size < 1) fail("train.batch_size", "must be >= 1");
        if (t.contains("stage1")) parse_stage(t["stage1"], "train.stage1", c.stage1);
        if (t.contains("stage2")) parse_stage(t["stage2"], "train.stage2", c.stage2);
    }
    if (doc.contains("eval")) {
        const json& e = doc["eval"];
        reject_unknown(e, "eval", {"threshold"});
        get(e, "eval", "threshold", c.threshold);
    }
    if (doc.contains("data")) {
        const json& d = doc["data"];
        reject_unknown(d, "data", {"dir", "descriptions", "vocab", "synthetic"});
        get(d, "data", "dir", c.data_dir);
        get(d, "data", "descriptions", c.descriptions_path);
        get(d, "data", "vocab", c.vocab_path);
        if (d.contains("synthetic")) {
            const json& s = d["synthetic"];
            reject_unknown(s, "data.synthetic",
                           {"n_samples", "seed", "base_rate", "regions", "cooccurrence"});
            SyntheticSpec spec;
            get(s, "data.synthetic", "n_samples", spec.n_samples);
            get(s, "data.synthetic", "seed", spec.seed);
            get(s, "data.synthetic", "base_rate", spec.base_rate);
            if (spec.n_samples < 1) fail("data.synthetic.n_samples", "must be >= 1");
            if (spec.base_rate <= 0 || spec.base_rate >= 1)
                fail("data.synthetic.base_rate", "must be in (0,1)");
            if (s.contains("regions")) {
                for (const auto& r : s["regions"]) {
                    if (!r.is_array() || r.size() != 4)
                        fail("data.synthetic.regions", "each region must be [x,y,w,h]");
                    spec.regions.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>(),
                                            r[3].get<int>()});
                }
                if (static_cast<int>(spec.regions.size()) != c.n_aus)
                    fail("data.synthetic.regions", "need one region per AU");
            }
            if (s.contains("cooccurrence")) {
                get(s, "data.synthetic", "cooccurrence", spec.cooccurrence);
                if (static_cast<int>(spec.cooccurrence.size()) != c.n_aus)
                    fail("data.synthetic.cooccurrence", "must be n_aus x n_aus");
                for (int i = 0; i < c.n_aus; ++i) {
                    if (static_cast<int>(spec.cooccurrence[i].size()) != c.n_aus)
                        fail("data.synthetic.cooccurrence", "must be n_aus x n_aus");
                    if (spec.cooccurrence[i][i] != 1.0)
                        fail("data.synthetic.cooccurrence", "diagonal must be 1");
                    for (int j = 0; j < c.n_aus; ++j)
                        if (spec.cooccurrence[i][j] != spec.cooccurrence[j][i])
                            fail("data.synthetic.cooccurrence", "must be symmetric");
                }
            }
            c.synthetic = std::move(spec);
        }
    }
    if (doc.contains("ablation")) {
        const json& a = doc["ablation"];
        reject_unknown(a, "ablation", {"no_ddca", "no_cdca", "no_text", "no_aug", "no_diff_loss"});
        get(a, "ablation", "no_ddca", c.ablation.no_ddca);
        get(a, "ablation", "no_cdca", c.ablation.no_cdca);
        get(a, "ablation", "no_text", c.ablation.no_text);
        get(a, "ablation", "no_aug", c.ablation.no_aug);
        get(a, "ablation", "no_diff_loss", c.ablation.no_diff_loss);
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return parse_config(doc);
}

json apply_overrides(json doc, const json& overrides) {
    for (const auto& [path, value] : overrides.items()) {
        json* at = &doc;
        std::istringstream is(path);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(is, part, '.')) parts.push_back(part);
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) at = &(*at)[parts[i]];
        (*at)[parts.back()] = value;
    }
    return doc;
}

}  // namespace hiva
