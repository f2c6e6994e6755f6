#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hiva {

struct StageSpec {
    double lr = 1e-5;
    int epochs = 1;
};

struct SyntheticSpec {
    int n_samples = 64;
    std::uint64_t seed = 7;
    double base_rate = 0.5;
    // per-AU rectangles [x, y, w, h] in image pixels; defaulted to a grid
    std::vector<std::array<int, 4>> regions;
    std::vector<std::vector<double>> cooccurrence;  // defaulted to identity
};

struct AblationFlags {
    bool no_ddca = false;
    bool no_cdca = false;
    bool no_text = false;
    bool no_aug = false;
    bool no_diff_loss = false;
};

struct RunConfig {
    // model
    int n_aus = 6;
    int d = 64;       // shared cross-modal width
    int d_text = 64;  // text encoder width d'
    int c_raw = 64;
    int image_size = 32;
    std::string backbone = "toy-conv";  // or "swin-like"

    // text
    int max_len = 16;
    int encoder_layers = 4;
    int trainable_last = 2;
    int encoder_heads = 4;
    int ctx_layers = 3;
    int ctx_heads = 4;
    int vocab_size = 0;  // filled from the vocab file, not the config

    // graph
    int k = 3;

    // loss
    double lambda = 1e-5;

    // training
    std::uint64_t seed = 42;
    int batch_size = 8;
    StageSpec stage1{1e-5, 1};
    StageSpec stage2{1e-6, 1};

    // evaluation
    double threshold = 0.5;

    // data
    std::string data_dir;
    std::string descriptions_path;
    std::string vocab_path;
    std::optional<SyntheticSpec> synthetic;

    AblationFlags ablation;

    nlohmann::json to_json() const;
    std::uint64_t hash() const;  // over the canonical serialized form
    int feature_hw() const;      // spatial side of the global feature map
};

// Parses and validates a config document. Unknown keys are rejected with the
// closest known key as a suggestion; violations throw ConfigError naming the
// dotted key path.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

// CLI-style overrides: {"train.seed": 7, "ablation.no_ddca": true}
nlohmann::json apply_overrides(nlohmann::json doc, const nlohmann::json& overrides);

std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t h = 14695981039346656037ull);
std::string hash_hex(std::uint64_t h);

}  // namespace hiva
