#pragma once

#include "hiva/data.hpp"
#include "hiva/model.hpp"

#include <string>
#include <vector>

namespace hiva {

struct ConfusionCounts {
    std::vector<long> tp, fp, fn, tn;  // per AU
    explicit ConfusionCounts(int n = 0) : tp(n, 0), fp(n, 0), fn(n, 0), tn(n, 0) {}
    void add(const Eigen::VectorXd& p, const Eigen::VectorXd& y, double threshold);
};

struct F1Report {
    std::vector<double> per_au;  // percent
    double mean = 0;             // unweighted average, percent
    double threshold = 0.5;
    long sample_count = 0;
};

// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); degenerate counts give 0.
F1Report f1_per_au(const ConfusionCounts& counts, double threshold, long sample_count);

// Full inference pass over a dataset with fixed text features.
F1Report evaluate(const Model& model, const std::vector<AUSample>& samples,
                  const TextFeatures& text, double threshold, const AblationFlags& ablation);

// Stage-1 variant: vision -> branches -> graph -> stage-1 head.
F1Report evaluate_stage1(const Model& model, const std::vector<AUSample>& samples,
                         double threshold);

// Per sample: N reverse-DDCA spatial maps plus one composite CDCA map, as
// JSON arrays and heatmap overlays rendered in image coordinates.
struct AttentionExport {
    std::string sample_id;
    std::vector<ad::Mat> ddca_maps;  // per AU, [H_f x W_f]
    ad::Mat cdca_map;                // [H_f x W_f]
    int stride = 0;
};
std::vector<AttentionExport> export_attention_maps(const Model& model,
                                                   const std::vector<AUSample>& samples,
                                                   const TextFeatures& text,
                                                   const std::string& out_dir);

// Per sample: adjacency, similarities, predictions, labels.
void export_graph(const Model& model, const std::vector<AUSample>& samples,
                  const std::string& out_dir);
nlohmann::json graph_dump_record(const Model& model, const AUSample& sample);

// Parameter counts, a MAC estimate for one forward pass at the configured
// input size, and measured wall time per batch.
nlohmann::json report_model_stats(const Model& model, int timing_batch = 4);

// Header `AU,<ids...>,AVE`; cells percent with one decimal; deterministic.
void export_metrics_csv(const F1Report& report, const std::vector<std::string>& au_names,
                        const std::string& path);

// Subject-independent fold assignment by seeded hash of the subject id.
int fold_of(const std::string& subject_id, int n_folds, std::uint64_t seed);

}  // namespace hiva
