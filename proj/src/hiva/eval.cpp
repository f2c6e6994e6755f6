#include "hiva/eval.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace hiva {

namespace fs = std::filesystem;
using namespace ad;

void ConfusionCounts::add(const Eigen::VectorXd& p, const Eigen::VectorXd& y, double threshold) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        bool pred = p(i) >= threshold;
        bool truth = y(i) != 0.0;
        auto idx = static_cast<std::size_t>(i);
        if (pred && truth)
            ++tp[idx];
        else if (pred && !truth)
            ++fp[idx];
        else if (!pred && truth)
            ++fn[idx];
        else
            ++tn[idx];
    }
}

F1Report f1_per_au(const ConfusionCounts& counts, double threshold, long sample_count) {
    F1Report r;
    r.threshold = threshold;
    r.sample_count = sample_count;
    double sum = 0;
    for (std::size_t i = 0; i < counts.tp.size(); ++i) {
        double f1 = 0.0;
        long tp = counts.tp[i];
        if (tp + counts.fp[i] > 0 && tp + counts.fn[i] > 0 && tp > 0) {
            double p = static_cast<double>(tp) / (tp + counts.fp[i]);
            double rec = static_cast<double>(tp) / (tp + counts.fn[i]);
            if (p + rec > 0) f1 = 2.0 * p * rec / (p + rec);
        }
        r.per_au.push_back(f1 * 100.0);
        sum += f1 * 100.0;
    }
    r.mean = counts.tp.empty() ? 0.0 : sum / static_cast<double>(counts.tp.size());
    return r;
}

namespace {

Eigen::VectorXd fused_probs(const Model& model, const AUSample& sample, const TextFeatures& text,
                            const AblationFlags& ablation, FusedForward* fwd_out = nullptr) {
    Tape tape;
    VarMap vars = bind_params(tape, model.params, /*needs_grad=*/false);
    std::vector<Var> tokens;
    for (const auto& t : text.tokens) tokens.push_back(tape.constant(t));
    Var z = tape.constant(text.z.size() ? text.z : Mat::Zero(model.cfg.n_aus, model.cfg.d));
    FusedForward fwd = fused_forward(tape, vars, model.cfg, sample.image, tokens, z, ablation);
    Eigen::VectorXd probs = sigmoid_vec(fwd.logits->val.col(0));
    if (fwd_out) *fwd_out = std::move(fwd);
    return probs;
}

}  // namespace

F1Report evaluate(const Model& model, const std::vector<AUSample>& samples,
                  const TextFeatures& text, double threshold, const AblationFlags& ablation) {
    ConfusionCounts counts(model.cfg.n_aus);
    for (const auto& s : samples)
        counts.add(fused_probs(model, s, text, ablation), s.labels, threshold);
    return f1_per_au(counts, threshold, static_cast<long>(samples.size()));
}

F1Report evaluate_stage1(const Model& model, const std::vector<AUSample>& samples,
                         double threshold) {
    ConfusionCounts counts(model.cfg.n_aus);
    for (const auto& s : samples) {
        Tape tape;
        VarMap vars = bind_params(tape, model.params, false);
        Stage1Forward fwd = stage1_forward(tape, vars, model.cfg, s.image);
        counts.add(sigmoid_vec(fwd.logits->val.col(0)), s.labels, threshold);
    }
    return f1_per_au(counts, threshold, static_cast<long>(samples.size()));
}

namespace {

nlohmann::json mat_to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

// nearest-neighbor upsampled red heatmap over the grayscale input
void render_heatmap(const std::string& path, const AUSample& sample, const Mat& map, int stride) {
    const int size = sample.image_size;
    double peak = map.maxCoeff();
    if (peak <= 0) peak = 1.0;
    Mat img(static_cast<Eigen::Index>(size) * size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            Eigen::Index p = static_cast<Eigen::Index>(y) * size + x;
            double gray =
                (sample.image(p, 0) + sample.image(p, 1) + sample.image(p, 2)) / 3.0;
            double heat = map(std::min<int>(y / stride, static_cast<int>(map.rows()) - 1),
                              std::min<int>(x / stride, static_cast<int>(map.cols()) - 1)) /
                          peak;
            img(p, 0) = std::min(1.0, 0.5 * gray + 0.5 * heat);
            img(p, 1) = 0.5 * gray;
            img(p, 2) = 0.5 * gray;
        }
    write_ppm(path, img, size);
}

}  // namespace

std::vector<AttentionExport> export_attention_maps(const Model& model,
                                                   const std::vector<AUSample>& samples,
                                                   const TextFeatures& text,
                                                   const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::vector<AttentionExport> exports;
    for (const auto& s : samples) {
        FusedForward fwd;
        (void)fused_probs(model, s, text, AblationFlags{}, &fwd);
        AttentionExport ex;
        ex.sample_id = s.sample_id;
        ex.stride = fwd.vis.stride;
        const int hf = fwd.vis.h_f, wf = fwd.vis.w_f;
        for (int i = 0; i < model.cfg.n_aus; ++i) {
            // reverse-DDCA row over AU i's spatial map
            const Mat& map = fwd.ddca_reverse[static_cast<std::size_t>(i)].weights;
            Mat grid(hf, wf);
            for (int y = 0; y < hf; ++y)
                for (int x = 0; x < wf; ++x) grid(y, x) = map(0, y * wf + x);
            ex.ddca_maps.push_back(grid);
        }
        // composite CDCA map: mean over AU queries of the forward weights
        Mat mean_row = fwd.cdca_forward->weights.colwise().mean();
        Mat cgrid(hf, wf);
        for (int y = 0; y < hf; ++y)
            for (int x = 0; x < wf; ++x) cgrid(y, x) = mean_row(0, y * wf + x);
        ex.cdca_map = cgrid;

        for (int i = 0; i < model.cfg.n_aus; ++i) {
            std::string base = (fs::path(out_dir) / (s.sample_id + "_au" + std::to_string(i)))
                                   .string();
            std::ofstream(base + ".json") << mat_to_json(ex.ddca_maps[static_cast<std::size_t>(i)])
                                                 .dump() << "\n";
            render_heatmap(base + ".ppm", s, ex.ddca_maps[static_cast<std::size_t>(i)],
                           ex.stride);
        }
        std::string base = (fs::path(out_dir) / (s.sample_id + "_cdca")).string();
        std::ofstream(base + ".json") << mat_to_json(ex.cdca_map).dump() << "\n";
        render_heatmap(base + ".ppm", s, ex.cdca_map, ex.stride);
        exports.push_back(std::move(ex));
    }
    return exports;
}

nlohmann::json graph_dump_record(const Model& model, const AUSample& sample) {
    Tape tape;
    VarMap vars = bind_params(tape, model.params, false);
    Stage1Forward fwd = stage1_forward(tape, vars, model.cfg, sample.image);
    nlohmann::json rec;
    rec["sample_id"] = sample.sample_id;
    rec["k"] = model.cfg.k;
    nlohmann::json edges = nlohmann::json::array();
    for (int i = 0; i < model.cfg.n_aus; ++i)
        for (int j = 0; j < model.cfg.n_aus; ++j)
            if (fwd.adj.a(i, j)) edges.push_back({i, j});
    rec["edges"] = edges;
    nlohmann::json norms = nlohmann::json::array(), preds = nlohmann::json::array(),
                   labels = nlohmann::json::array();
    Eigen::VectorXd p = sigmoid_vec(fwd.logits->val.col(0));
    for (int i = 0; i < model.cfg.n_aus; ++i) {
        norms.push_back(fwd.branches.u->val.row(i).norm());
        preds.push_back(p(i));
        labels.push_back(static_cast<int>(sample.labels(i)));
    }
    rec["U_norms"] = norms;
    rec["predictions"] = preds;
    rec["labels"] = labels;
    rec["similarity"] = mat_to_json(fwd.similarity);
    return rec;
}

void export_graph(const Model& model, const std::vector<AUSample>& samples,
                  const std::string& out_dir) {
    fs::create_directories(out_dir);
    for (const auto& s : samples) {
        std::ofstream out(fs::path(out_dir) / (s.sample_id + "_graph.json"));
        if (!out) throw ParseError("cannot write graph dump in " + out_dir);
        out << graph_dump_record(model, s).dump(2) << "\n";
    }
}

nlohmann::json report_model_stats(const Model& model, int timing_batch) {
    nlohmann::json stats;
    std::map<std::string, std::size_t> per_module;
    std::size_t total = 0;
    for (const auto& [name, m] : model.params.all()) {
        std::string module = name.substr(0, name.find('.'));
        per_module[module] += static_cast<std::size_t>(m.size());
        total += static_cast<std::size_t>(m.size());
    }
    stats["total_parameters"] = total;
    stats["per_module"] = per_module;
    stats["config_hash"] = hash_hex(model.cfg.hash());

    // MAC estimate: one fused forward, matmul-dominated terms only
    const RunConfig& c = model.cfg;
    const long hw = static_cast<long>(c.feature_hw()) * c.feature_hw();
    long macs = 0;
    if (c.backbone == "toy-conv") {
        int size = c.image_size, cin = 3;
        for (int cout : {std::max(8, c.c_raw / 4), std::max(8, c.c_raw / 2), c.c_raw}) {
            int out = conv_out_dim(size, 3, 2, 1);
            macs += static_cast<long>(out) * out * 9 * cin * cout;
            size = out;
            cin = cout;
        }
    } else {
        int g = c.image_size / 4;
        auto widths = swin_stage_widths(c.c_raw);
        macs += static_cast<long>(g) * g * 48 * widths[0];
        for (std::size_t s = 0; s < widths.size(); ++s) {
            long tokens = static_cast<long>(g) * g, w = widths[s];
            macs += 2 * (4 * tokens * w * w + 2 * tokens * w * 2 * w);  // qkvo + mlp, 2 blocks
            if (s + 1 < widths.size()) {
                macs += (tokens / 4) * 4 * w * widths[s + 1];
                g /= 2;
            }
        }
    }
    macs += hw * c.c_raw * c.d;                      // projection
    macs += static_cast<long>(c.n_aus) * hw * c.d * c.d;  // branches
    macs += 8L * c.n_aus * c.d * c.d;                // interaction projections (coarse)
    macs += static_cast<long>(c.n_aus) * 3 * c.d * c.d;   // fusion
    stats["estimated_macs_per_forward"] = macs;

    // measured wall clock for one small batch of fused forwards
    SyntheticSpec spec;
    spec.n_samples = timing_batch;
    spec.seed = 1;
    auto samples = generate_synthetic_dataset(spec, c.n_aus, c.image_size);
    TextFeatures text;
    text.z = Mat::Zero(c.n_aus, c.d);
    for (int i = 0; i < c.n_aus; ++i) text.tokens.push_back(Mat::Zero(3, c.d));
    auto t0 = std::chrono::steady_clock::now();
    AblationFlags none;
    for (const auto& s : samples) (void)fused_probs(model, s, text, none);
    auto t1 = std::chrono::steady_clock::now();
    stats["wall_ms_per_batch"] =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    stats["timing_batch"] = timing_batch;
    return stats;
}

void export_metrics_csv(const F1Report& report, const std::vector<std::string>& au_names,
                        const std::string& path) {
    if (report.per_au.empty()) throw ParseError("export_metrics_csv: empty AU set");
    if (au_names.size() != report.per_au.size())
        throw ParseError("export_metrics_csv: name count does not match AU count");
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write metrics csv: " + path);
    out << "AU";
    for (const auto& n : au_names) out << "," << n;
    out << ",AVE\nF1";
    out << std::fixed << std::setprecision(1);
    for (double f : report.per_au) out << "," << f;
    out << "," << report.mean << "\n";
}

int fold_of(const std::string& subject_id, int n_folds, std::uint64_t seed) {
    std::uint64_t h = fnv1a64(subject_id.data(), subject_id.size(), seed ^ 0xf01d);
    return static_cast<int>(h % static_cast<std::uint64_t>(n_folds));
}

}  // namespace hiva
