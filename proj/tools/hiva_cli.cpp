#include <hiva/hiva.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

// "--set loss.lambda=0.01" style overrides; values parse as JSON when they
// can, otherwise as strings.
std::string overrides_to_json(const std::vector<std::string>& sets) {
    nlohmann::json obj = nlohmann::json::object();
    for (const auto& kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
        std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
        nlohmann::json val = nlohmann::json::parse(raw, nullptr, false);
        obj[key] = val.is_discarded() ? nlohmann::json(raw) : val;
    }
    return obj.dump();
}

int report(hiva_session* s, int rc) {
    if (rc != HIVA_OK) std::fprintf(stderr, "error: %s\n", hiva_last_error(s));
    return rc;
}

void print_and_free(char* json) {
    if (json) {
        std::printf("%s\n", json);
        hiva_string_free(json);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HiVA action unit detection"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("-c,--config", config_path, "JSON config file")->required();
    app.add_option("--set", sets, "dotted-path config override, key=value");

    std::string out_dir, from_ckpt, out_ckpt, csv_path;
    int stage = 0;
    bool stage1_head = false, no_ddca = false, no_cdca = false, no_text = false;

    auto* gen = app.add_subcommand("generate-data", "write a synthetic dataset");
    gen->add_option("--out", out_dir, "output directory (default: configured data dir)");

    auto* train = app.add_subcommand("train", "run one training stage");
    train->add_option("--stage", stage, "training stage")->required()->check(CLI::Range(1, 2));
    train->add_option("--from", from_ckpt, "checkpoint to start from");
    train->add_option("--out", out_ckpt, "checkpoint to write")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", from_ckpt, "checkpoint to evaluate")->required();
    eval->add_option("--csv", csv_path, "metrics CSV to write");
    eval->add_flag("--stage1-head", stage1_head, "use the stage-1 prediction head");
    eval->add_flag("--no-ddca", no_ddca, "zero the per-AU cross-attention features");
    eval->add_flag("--no-cdca", no_cdca, "zero the global cross-attention features");
    eval->add_flag("--no-text", no_text, "zero all text features");

    auto* viza = app.add_subcommand("viz-attention", "export attention maps");
    viza->add_option("--checkpoint", from_ckpt, "checkpoint")->required();
    viza->add_option("--out", out_dir, "output directory")->required();

    auto* vizg = app.add_subcommand("viz-graph", "export AU relation graphs");
    vizg->add_option("--checkpoint", from_ckpt, "checkpoint")->required();
    vizg->add_option("--out", out_dir, "output directory")->required();

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    auto* stats = app.add_subcommand("stats", "model size and speed report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : HIVA_USAGE_ERROR;
    }

    std::string overrides;
    try {
        if (no_ddca) sets.push_back("ablation.no_ddca=true");
        if (no_cdca) sets.push_back("ablation.no_cdca=true");
        if (no_text) sets.push_back("ablation.no_text=true");
        overrides = overrides_to_json(sets);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return HIVA_USAGE_ERROR;
    }

    hiva_session* s = nullptr;
    int rc = hiva_open(config_path.c_str(), overrides.c_str(), &s);
    if (rc != HIVA_OK) {
        std::fprintf(stderr, "error: %s\n", hiva_last_error(s));
        hiva_close(s);
        return rc;
    }

    char* json = nullptr;
    if (gen->parsed()) {
        rc = report(s, hiva_generate_data(s, out_dir.empty() ? nullptr : out_dir.c_str()));
    } else if (train->parsed()) {
        rc = report(s, hiva_train(s, stage, from_ckpt.empty() ? nullptr : from_ckpt.c_str(),
                                  out_ckpt.c_str(), &json));
        print_and_free(json);
    } else if (eval->parsed()) {
        rc = report(s, hiva_evaluate(s, from_ckpt.c_str(), stage1_head ? 1 : 0,
                                     csv_path.empty() ? nullptr : csv_path.c_str(), &json));
        print_and_free(json);
    } else if (viza->parsed()) {
        rc = report(s, hiva_export_attention(s, from_ckpt.c_str(), out_dir.c_str()));
    } else if (vizg->parsed()) {
        rc = report(s, hiva_export_graph(s, from_ckpt.c_str(), out_dir.c_str()));
    } else if (grad->parsed()) {
        rc = report(s, hiva_gradcheck(s, &json));
        print_and_free(json);
    } else if (stats->parsed()) {
        rc = report(s, hiva_model_stats(s, &json));
        print_and_free(json);
    }
    hiva_close(s);
    return rc;
}
