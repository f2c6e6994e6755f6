#include "hiva/hiva.h"

#include "hiva/eval.hpp"
#include "hiva/train.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using namespace hiva;

struct hiva_session {
    RunConfig cfg;
    std::string last_error = "ok";
};

namespace {

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

int fail(hiva_session* s, int code, const std::string& msg) {
    if (s) s->last_error = msg;
    return code;
}

// Catches a command body and maps exception types onto status codes.
template <typename Fn>
int guarded(hiva_session* s, Fn&& fn) {
    if (!s) return HIVA_USAGE_ERROR;
    try {
        s->last_error = "ok";
        return fn();
    } catch (const ConfigError& e) {
        return fail(s, HIVA_VALIDATION_ERROR, e.what());
    } catch (const ParseError& e) {
        return fail(s, HIVA_VALIDATION_ERROR, e.what());
    } catch (const std::exception& e) {
        return fail(s, HIVA_RUNTIME_ERROR, e.what());
    }
}

std::vector<std::string> read_au_names(const std::string& data_dir, int n_aus) {
    std::ifstream in(fs::path(data_dir) / "labels.csv");
    if (!in) throw ParseError("label table not found: " + data_dir + "/labels.csv");
    std::string line;
    std::getline(in, line);
    std::vector<std::string> names;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            names.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    names.push_back(cur);
    names.erase(names.begin());  // sample_id column
    if (static_cast<int>(names.size()) != n_aus)
        throw ParseError("label table has " + std::to_string(names.size()) +
                         " AU columns, config expects " + std::to_string(n_aus));
    return names;
}

struct LoadedEnv {
    std::vector<AUSample> samples;
    std::vector<std::string> au_names;
    DescriptionSet descriptions;
    Vocab vocab;
};

LoadedEnv load_env(hiva_session* s, bool need_text) {
    LoadedEnv env;
    if (s->cfg.data_dir.empty()) throw ConfigError("data.dir: not set");
    env.samples = load_dataset(s->cfg.data_dir, s->cfg.n_aus);
    env.au_names = read_au_names(s->cfg.data_dir, s->cfg.n_aus);
    if (s->cfg.vocab_path.empty()) throw ConfigError("data.vocab: not set");
    env.vocab = Vocab::load(s->cfg.vocab_path);
    s->cfg.vocab_size = env.vocab.size();
    if (need_text) {
        if (s->cfg.descriptions_path.empty()) throw ConfigError("data.descriptions: not set");
        env.descriptions = load_description_set(s->cfg.descriptions_path, env.au_names);
    }
    return env;
}

Model load_model(hiva_session* s, const std::string& checkpoint, CheckpointMeta* meta_out) {
    Model model = Model::init(s->cfg);
    CheckpointMeta meta = load_checkpoint(checkpoint, model.params, hash_hex(s->cfg.hash()));
    if (meta_out) *meta_out = meta;
    return model;
}

// Cached canonical text features keyed to the checkpoint contents.
TextFeatures text_features_for(hiva_session* s, const Model& model,
                               const LoadedEnv& env, const std::string& checkpoint) {
    if (s->cfg.ablation.no_text) {
        TextFeatures f;
        f.z = ad::Mat::Zero(s->cfg.n_aus, s->cfg.d);
        for (int i = 0; i < s->cfg.n_aus; ++i) f.tokens.push_back(ad::Mat::Zero(1, s->cfg.d));
        return f;
    }
    nlohmann::json manifest = {{"checkpoint", hash_hex(checkpoint_file_hash(checkpoint))},
                               {"n_aus", s->cfg.n_aus},
                               {"d", s->cfg.d},
                               {"variant_policy", "canonical"}};
    const std::string cache_path = checkpoint + ".textcache";
    TextFeatures f;
    if (fs::exists(cache_path) && load_text_cache(cache_path, manifest, f)) return f;
    f = compute_text_features(model.params, s->cfg, env.descriptions, env.vocab);
    save_text_cache(cache_path, f, manifest);
    return f;
}

std::string location_phrase(const std::array<int, 4>& r, int image_size) {
    const int cx = r[0] + r[2] / 2, cy = r[1] + r[3] / 2;
    std::string v = cy < image_size / 3 ? "upper" : cy < 2 * image_size / 3 ? "middle" : "lower";
    std::string h = cx < image_size / 3 ? "left" : cx < 2 * image_size / 3 ? "central" : "right";
    return v + " " + h;
}

}  // namespace

extern "C" {

int hiva_open(const char* config_path, const char* overrides_json, hiva_session** out) {
    if (!config_path || !out) return HIVA_USAGE_ERROR;
    auto* s = new hiva_session;
    try {
        std::ifstream in(config_path);
        if (!in) throw ConfigError(std::string("config file not found: ") + config_path);
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string(config_path) + ": invalid JSON: " + e.what());
        }
        if (overrides_json && *overrides_json) {
            nlohmann::json ov;
            try {
                ov = nlohmann::json::parse(overrides_json);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(std::string("invalid override JSON: ") + e.what());
            }
            doc = apply_overrides(std::move(doc), ov);
        }
        s->cfg = parse_config(doc);
    } catch (const ConfigError& e) {
        s->last_error = e.what();
        *out = s;
        return HIVA_VALIDATION_ERROR;
    } catch (const std::exception& e) {
        s->last_error = e.what();
        *out = s;
        return HIVA_RUNTIME_ERROR;
    }
    *out = s;
    return HIVA_OK;
}

void hiva_close(hiva_session* s) { delete s; }

const char* hiva_last_error(const hiva_session* s) {
    return s ? s->last_error.c_str() : "null session";
}

int hiva_generate_data(hiva_session* s, const char* out_dir) {
    return guarded(s, [&]() -> int {
        if (!s->cfg.synthetic)
            throw ConfigError("synthetic: block required by generate-data but absent");
        const std::string dir =
            out_dir && *out_dir ? out_dir : s->cfg.data_dir;
        if (dir.empty()) return fail(s, HIVA_USAGE_ERROR, "no output directory given");
        const SyntheticSpec& spec = *s->cfg.synthetic;
        auto samples = generate_synthetic_dataset(spec, s->cfg.n_aus, s->cfg.image_size);

        std::vector<std::string> au_names;
        for (int i = 0; i < s->cfg.n_aus; ++i) au_names.push_back("AU" + std::to_string(i + 1));

        auto regions =
            spec.regions.empty() ? default_regions(s->cfg.n_aus, s->cfg.image_size) : spec.regions;
        DescriptionSet descriptions;
        descriptions.au_ids = au_names;
        for (int i = 0; i < s->cfg.n_aus; ++i) {
            std::string where = location_phrase(regions[static_cast<std::size_t>(i)],
                                                s->cfg.image_size);
            descriptions.variants.push_back(
                {"a bright square appears in the " + where + " part of the face",
                 "strong activation over the " + where + " region",
                 "the " + where + " area lights up with a warm patch"});
        }

        nlohmann::json manifest = {{"n_samples", spec.n_samples},
                                   {"seed", spec.seed},
                                   {"base_rate", spec.base_rate},
                                   {"image_size", s->cfg.image_size},
                                   {"au_names", au_names}};
        write_dataset(dir, samples, au_names, manifest);
        save_description_set((fs::path(dir) / "descriptions.txt").string(), descriptions);
        Vocab::build(descriptions).save((fs::path(dir) / "vocab.txt").string());
        return HIVA_OK;
    });
}

int hiva_train(hiva_session* s, int stage, const char* from_checkpoint,
               const char* out_checkpoint, char** log_json_out) {
    return guarded(s, [&]() -> int {
        if (stage != 1 && stage != 2)
            return fail(s, HIVA_USAGE_ERROR, "stage must be 1 or 2");
        if (!out_checkpoint || !*out_checkpoint)
            return fail(s, HIVA_USAGE_ERROR, "output checkpoint path required");
        if (stage == 2 && (!from_checkpoint || !*from_checkpoint))
            return fail(s, HIVA_USAGE_ERROR, "stage-1 checkpoint required (use --from)");

        LoadedEnv env = load_env(s, stage == 2 && !s->cfg.ablation.no_text);
        Model model = Model::init(s->cfg);
        std::optional<CheckpointMeta> resume;
        if (from_checkpoint && *from_checkpoint) {
            CheckpointMeta meta =
                load_checkpoint(from_checkpoint, model.params, hash_hex(s->cfg.hash()));
            if (meta.stage == stage) resume = meta;
            if (stage == 2 && meta.stage != 1 && meta.stage != 2)
                throw TrainError("checkpoint carries unknown stage " +
                                 std::to_string(meta.stage));
        }

        TrainingEngine engine(s->cfg, env.samples,
                              stage == 2 ? &env.descriptions : nullptr,
                              stage == 2 ? &env.vocab : nullptr);
        CheckpointMeta meta = stage == 1 ? engine.train_stage1(model, resume)
                                         : engine.train_stage2(model, resume);
        save_checkpoint(out_checkpoint, model.params, meta);

        if (log_json_out) {
            nlohmann::json log = nlohmann::json::array();
            for (const EpochLog& e : engine.log())
                log.push_back({{"epoch", e.epoch},
                               {"l_au", e.l_au},
                               {"l_diff", e.l_diff},
                               {"l_tot", e.l_tot},
                               {"mean_f1", e.mean_f1},
                               {"wall_time", e.wall_time}});
            *log_json_out = dup_string(log.dump(2));
        }
        return HIVA_OK;
    });
}

int hiva_evaluate(hiva_session* s, const char* checkpoint, int use_stage1_head,
                  const char* metrics_csv_path, char** report_json_out) {
    return guarded(s, [&]() -> int {
        if (!checkpoint || !*checkpoint)
            return fail(s, HIVA_USAGE_ERROR, "checkpoint path required");
        LoadedEnv env = load_env(s, !use_stage1_head && !s->cfg.ablation.no_text);
        Model model = load_model(s, checkpoint, nullptr);
        F1Report report;
        if (use_stage1_head) {
            report = evaluate_stage1(model, env.samples, s->cfg.threshold);
        } else {
            TextFeatures text = text_features_for(s, model, env, checkpoint);
            report = evaluate(model, env.samples, text, s->cfg.threshold, s->cfg.ablation);
        }
        if (metrics_csv_path && *metrics_csv_path)
            export_metrics_csv(report, env.au_names, metrics_csv_path);
        if (report_json_out) {
            nlohmann::json j = {{"mean_f1", report.mean},
                                {"threshold", report.threshold},
                                {"samples", report.sample_count}};
            nlohmann::json per = nlohmann::json::object();
            for (std::size_t i = 0; i < report.per_au.size(); ++i)
                per[env.au_names[i]] = report.per_au[i];
            j["per_au_f1"] = per;
            *report_json_out = dup_string(j.dump(2));
        }
        return HIVA_OK;
    });
}

int hiva_export_attention(hiva_session* s, const char* checkpoint, const char* out_dir) {
    return guarded(s, [&]() -> int {
        if (!checkpoint || !*checkpoint || !out_dir || !*out_dir)
            return fail(s, HIVA_USAGE_ERROR, "checkpoint and output directory required");
        LoadedEnv env = load_env(s, !s->cfg.ablation.no_text);
        Model model = load_model(s, checkpoint, nullptr);
        TextFeatures text = text_features_for(s, model, env, checkpoint);
        export_attention_maps(model, env.samples, text, out_dir);
        return HIVA_OK;
    });
}

int hiva_export_graph(hiva_session* s, const char* checkpoint, const char* out_dir) {
    return guarded(s, [&]() -> int {
        if (!checkpoint || !*checkpoint || !out_dir || !*out_dir)
            return fail(s, HIVA_USAGE_ERROR, "checkpoint and output directory required");
        LoadedEnv env = load_env(s, false);
        Model model = load_model(s, checkpoint, nullptr);
        export_graph(model, env.samples, out_dir);
        return HIVA_OK;
    });
}

int hiva_gradcheck(hiva_session* s, char** results_json_out) {
    return guarded(s, [&]() -> int {
        auto results = gradient_check();
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : results)
            j.push_back({{"target", r.target}, {"max_rel_error", r.max_rel_error}});
        if (results_json_out) *results_json_out = dup_string(j.dump(2));
        return HIVA_OK;
    });
}

int hiva_model_stats(hiva_session* s, char** stats_json_out) {
    return guarded(s, [&]() -> int {
        if (s->cfg.vocab_size < 1) {
            if (s->cfg.vocab_path.empty()) throw ConfigError("data.vocab: not set");
            s->cfg.vocab_size = Vocab::load(s->cfg.vocab_path).size();
        }
        Model model = Model::init(s->cfg);
        nlohmann::json stats = report_model_stats(model);
        if (stats_json_out) *stats_json_out = dup_string(stats.dump(2));
        return HIVA_OK;
    });
}

void hiva_string_free(char* str) { std::free(str); }

}  // extern "C"
