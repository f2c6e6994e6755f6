#include "hiva/train.hpp"

#include "hiva/eval.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

namespace hiva {

using namespace ad;

// --- checkpointing ---

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TrainError("cannot write checkpoint: " + path);
    const char magic[8] = {'H', 'I', 'V', 'A', 'C', 'K', 'P', '1'};
    out.write(magic, 8);
    std::int64_t count = static_cast<std::int64_t>(params.all().size());
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    for (const auto& [name, m] : params.all()) {
        std::int32_t len = static_cast<std::int32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(name.data(), len);
        std::int64_t r = m.rows(), c = m.cols();
        out.write(reinterpret_cast<const char*>(&r), sizeof r);
        out.write(reinterpret_cast<const char*>(&c), sizeof c);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                double v = m(i, j);
                out.write(reinterpret_cast<const char*>(&v), sizeof v);
            }
    }
    nlohmann::json manifest = {{"stage", meta.stage},
                               {"epoch", meta.epoch},
                               {"config_hash", meta.config_hash},
                               {"seed", meta.seed},
                               {"rng_state", meta.rng_state}};
    std::ofstream mf(path + ".manifest.json");
    if (!mf) throw TrainError("cannot write checkpoint manifest: " + path);
    mf << manifest.dump(2) << "\n";
}

CheckpointMeta load_checkpoint(const std::string& path, ParamStore& params,
                               const std::string& expected_config_hash) {
    std::ifstream mf(path + ".manifest.json");
    if (!mf) throw TrainError("checkpoint manifest not found: " + path + ".manifest.json");
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw TrainError(std::string("corrupt checkpoint manifest: ") + e.what());
    }
    CheckpointMeta meta;
    meta.stage = manifest.at("stage").get<int>();
    meta.epoch = manifest.at("epoch").get<int>();
    meta.config_hash = manifest.at("config_hash").get<std::string>();
    meta.seed = manifest.at("seed").get<std::uint64_t>();
    meta.rng_state = manifest.at("rng_state").get<std::string>();
    if (!expected_config_hash.empty() && meta.config_hash != expected_config_hash)
        throw TrainError("checkpoint config hash mismatch: file has " + meta.config_hash +
                         ", current config is " + expected_config_hash);

    std::ifstream in(path, std::ios::binary);
    if (!in) throw TrainError("checkpoint not found: " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::string(magic, 8) != "HIVACKP1") throw TrainError("corrupt checkpoint: " + path);
    std::int64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    for (std::int64_t p = 0; p < count; ++p) {
        std::int32_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof len);
        std::string name(static_cast<std::size_t>(len), '\0');
        in.read(name.data(), len);
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
        if (params.has(name))
            params.at(name) = std::move(m);
        else
            params.add(name, std::move(m));
    }
    if (!in) throw TrainError("truncated checkpoint: " + path);
    return meta;
}

std::uint64_t checkpoint_file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TrainError("checkpoint not found: " + path);
    std::uint64_t h = 14695981039346656037ull;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    return h;
}

// --- optimizer ---

void AdamOptimizer::step(ParamStore& params, const VarMap& vars,
                         const std::function<bool(const std::string&)>& trainable) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (const auto& [name, var] : vars) {
        if (!trainable(name) || !var->has_grad()) continue;
        Mat& p = params.at(name);
        Mat& m = m_.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
        Mat& v = v_.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
        m = beta1_ * m + (1.0 - beta1_) * var->grad;
        v = beta2_ * v + (1.0 - beta2_) * var->grad.cwiseProduct(var->grad);
        p.array() -= lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
    }
}

double total_loss(double l_au, double l_diff, double lambda) {
    if (!std::isfinite(l_au) || !std::isfinite(l_diff))
        throw TrainError("total_loss: non-finite input");
    return l_au + lambda * l_diff;
}

// --- training engine ---

TrainingEngine::TrainingEngine(const RunConfig& cfg, const std::vector<AUSample>& samples,
                               const DescriptionSet* descriptions, const Vocab* vocab)
    : cfg_(cfg), samples_(samples), descriptions_(descriptions), vocab_(vocab) {
    if (samples.empty()) throw TrainError("training dataset is empty");
    weights_ = compute_class_weights(samples);
}

namespace {

double mean_f1_of(const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& preds,
                  double threshold) {
    if (preds.empty()) return 0;
    ConfusionCounts counts(static_cast<int>(preds.front().first.size()));
    for (const auto& [p, y] : preds) counts.add(p, y, threshold);
    return f1_per_au(counts, threshold, static_cast<long>(preds.size())).mean;
}

}  // namespace

CheckpointMeta TrainingEngine::train_stage1(Model& model, std::optional<CheckpointMeta> resume) {
    AdamOptimizer opt(cfg_.stage1.lr);
    Rng rng(Rng::derive(cfg_.seed, 0x51));
    int start_epoch = 0;
    if (resume) {
        if (resume->stage != 1) throw TrainError("stage-1 resume needs a stage-1 checkpoint");
        start_epoch = resume->epoch;
        rng.set_state(resume->rng_state);
    }
    for (int epoch = start_epoch; epoch < start_epoch + cfg_.stage1.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        double loss_sum = 0;
        int batches = 0;
        std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> preds;
        for (const Batch& batch : make_batches(samples_, cfg_.batch_size, cfg_.seed, epoch)) {
            Tape tape;
            VarMap vars = bind_params(tape, model.params, true);
            std::vector<Var> losses;
            for (const AUSample* s : batch.samples) {
                Stage1Forward fwd = stage1_forward(tape, vars, cfg_, s->image);
                losses.push_back(au_loss(fwd.logits, s->labels, weights_.w));
                preds.emplace_back(sigmoid_vec(fwd.logits->val.col(0)), s->labels);
            }
            Var loss = scale(sum_all(concat_rows(losses)),
                             1.0 / static_cast<double>(losses.size()));
            if (!std::isfinite(loss->val(0, 0)))
                throw TrainError("stage 1: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches));
            tape.backward(loss);
            opt.step(model.params, vars,
                     [&](const std::string& n) { return model.trainable(n, 1); });
            loss_sum += loss->val(0, 0);
            ++batches;
            ++steps_;
        }
        auto t1 = std::chrono::steady_clock::now();
        EpochLog entry;
        entry.epoch = epoch + 1;
        entry.l_au = loss_sum / batches;
        entry.l_tot = entry.l_au;
        entry.mean_f1 = mean_f1_of(preds, cfg_.threshold);
        entry.wall_time = std::chrono::duration<double>(t1 - t0).count();
        log_.push_back(entry);
    }
    CheckpointMeta meta;
    meta.stage = 1;
    meta.epoch = start_epoch + cfg_.stage1.epochs;
    meta.config_hash = hash_hex(cfg_.hash());
    meta.seed = cfg_.seed;
    meta.rng_state = rng.state();
    return meta;
}

CheckpointMeta TrainingEngine::train_stage2(Model& model, std::optional<CheckpointMeta> resume) {
    const bool text_on = !cfg_.ablation.no_text;
    if (text_on && (!descriptions_ || !vocab_))
        throw TrainError("stage 2 requires a description set and vocabulary");
    AdamOptimizer opt(cfg_.stage2.lr);
    Rng rng(Rng::derive(cfg_.seed, 0x52));
    int start_epoch = 0;
    if (resume) {
        if (resume->stage != 2) throw TrainError("stage-2 resume needs a stage-2 checkpoint");
        start_epoch = resume->epoch;
        rng.set_state(resume->rng_state);
    }
    const double lambda = cfg_.ablation.no_diff_loss ? 0.0 : cfg_.lambda;
    for (int epoch = start_epoch; epoch < start_epoch + cfg_.stage2.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        double au_sum = 0, diff_sum = 0, tot_sum = 0;
        int batches = 0;
        std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> preds;
        for (const Batch& batch : make_batches(samples_, cfg_.batch_size, cfg_.seed, epoch)) {
            Tape tape;
            VarMap vars = bind_params(tape, model.params, true);

            std::vector<Var> token_feats;
            Var z;
            Var l_diff;
            if (text_on) {
                std::vector<int> variant(static_cast<std::size_t>(cfg_.n_aus), 0);
                if (!cfg_.ablation.no_aug)
                    for (int i = 0; i < cfg_.n_aus; ++i)
                        variant[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(
                            descriptions_->variants[static_cast<std::size_t>(i)].size()));
                TextForward text =
                    text_forward(tape, vars, cfg_, *descriptions_, *vocab_, variant);
                token_feats = std::move(text.tokens);
                z = text.z;
                l_diff = text.l_diff;
            } else {
                z = tape.zeros(cfg_.n_aus, cfg_.d);
                for (int i = 0; i < cfg_.n_aus; ++i) token_feats.push_back(tape.zeros(1, cfg_.d));
                l_diff = tape.zeros(1, 1);
            }

            std::vector<Var> losses;
            for (const AUSample* s : batch.samples) {
                FusedForward fwd =
                    fused_forward(tape, vars, cfg_, s->image, token_feats, z, cfg_.ablation);
                losses.push_back(au_loss(fwd.logits, s->labels, weights_.w));
                preds.emplace_back(sigmoid_vec(fwd.logits->val.col(0)), s->labels);
            }
            Var l_au = scale(sum_all(concat_rows(losses)),
                             1.0 / static_cast<double>(losses.size()));
            Var loss = lambda > 0.0 ? add(l_au, scale(l_diff, lambda)) : l_au;
            double tot = total_loss(l_au->val(0, 0), l_diff->val(0, 0), lambda);
            tape.backward(loss);
            opt.step(model.params, vars,
                     [&](const std::string& n) { return model.trainable(n, 2); });
            au_sum += l_au->val(0, 0);
            diff_sum += l_diff->val(0, 0);
            tot_sum += tot;
            ++batches;
            ++steps_;
        }
        auto t1 = std::chrono::steady_clock::now();
        EpochLog entry;
        entry.epoch = epoch + 1;
        entry.l_au = au_sum / batches;
        entry.l_diff = diff_sum / batches;
        entry.l_tot = tot_sum / batches;
        entry.mean_f1 = mean_f1_of(preds, cfg_.threshold);
        entry.wall_time = std::chrono::duration<double>(t1 - t0).count();
        log_.push_back(entry);
    }
    CheckpointMeta meta;
    meta.stage = 2;
    meta.epoch = start_epoch + cfg_.stage2.epochs;
    meta.config_hash = hash_hex(cfg_.hash());
    meta.seed = cfg_.seed;
    meta.rng_state = rng.state();
    return meta;
}

// --- gradient check ---

std::vector<GradCheckResult> gradient_check(std::uint64_t seed, double fd_step) {
    Rng rng(seed);
    auto randmat = [&rng](Eigen::Index r, Eigen::Index c) {
        Mat m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal() * 0.5;
        return m;
    };

    struct Case {
        std::string target;
        std::map<std::string, Mat> inputs;
        std::function<Var(Tape&, VarMap&)> build;  // scalar root
    };
    std::vector<Case> cases;

    // diff_loss on a 4x8 matrix
    cases.push_back({"diff_loss",
                     {{"h", randmat(4, 8)}},
                     [](Tape&, VarMap& v) { return diff_loss(v.at("h")); }});

    // graph_refine, projected to a scalar by a fixed random functional
    {
        RunConfig cfg;
        cfg.n_aus = 4;
        cfg.d = 6;
        Mat probe = randmat(4, 6);
        Adjacency adj;
        adj.k = 2;
        adj.a = Eigen::MatrixXi::Zero(4, 4);
        adj.a << 0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 0;
        cases.push_back({"graph_refine",
                         {{"u", randmat(4, 6)},
                          {"gcn.wr", randmat(6, 6)},
                          {"gcn.wg", randmat(6, 6)},
                          {"gcn.wm", randmat(6, 6)}},
                         [adj, probe](Tape& t, VarMap& v) {
                             Var out = graph_refine(v, v.at("u"), adj);
                             return sum_all(mul(out, t.constant(probe)));
                         }});
    }

    // ddca: N=2, L=3, 2x2 map, d=4
    {
        RunConfig cfg;
        cfg.n_aus = 2;
        cfg.d = 4;
        std::map<std::string, Mat> in = {
            {"u", randmat(2, 4)},       {"z", randmat(2, 4)},
            {"f0", randmat(4, 4)},      {"f1", randmat(4, 4)},
            {"tok0", randmat(3, 4)},    {"tok1", randmat(3, 4)},
            {"ddca.fwd.wq", randmat(4, 4)}, {"ddca.fwd.wk", randmat(4, 4)},
            {"ddca.fwd.wv", randmat(4, 4)}, {"ddca.rev.wq", randmat(4, 4)},
            {"ddca.rev.wk", randmat(4, 4)}, {"ddca.rev.wv", randmat(4, 4)}};
        Mat probe = randmat(2, 4);
        cases.push_back({"ddca", in, [cfg, probe](Tape& t, VarMap& v) {
                             DdcaForward out =
                                 ddca(v, cfg, v.at("u"), {v.at("f0"), v.at("f1")},
                                      {v.at("tok0"), v.at("tok1")}, v.at("z"));
                             return sum_all(mul(out.d, t.constant(probe)));
                         }});
    }

    // cdca: N=3, 2x2 map, d=4
    {
        RunConfig cfg;
        cfg.n_aus = 3;
        cfg.d = 4;
        std::map<std::string, Mat> in = {
            {"xg", randmat(4, 4)},      {"z", randmat(3, 4)},
            {"cdca.fwd.wq", randmat(4, 4)}, {"cdca.fwd.wk", randmat(4, 4)},
            {"cdca.fwd.wv", randmat(4, 4)}, {"cdca.rev.wq", randmat(4, 4)},
            {"cdca.rev.wk", randmat(4, 4)}, {"cdca.rev.wv", randmat(4, 4)}};
        Mat probe = randmat(3, 4);
        cases.push_back({"cdca", in, [cfg, probe](Tape& t, VarMap& v) {
                             CdcaForward out = cdca(v, cfg, v.at("xg"), v.at("z"));
                             return sum_all(mul(out.c, t.constant(probe)));
                         }});
    }

    // fuse_and_predict: N=3, d=4
    {
        RunConfig cfg;
        cfg.n_aus = 3;
        cfg.d = 4;
        std::map<std::string, Mat> in = {{"u", randmat(3, 4)},        {"dd", randmat(3, 4)},
                                         {"cc", randmat(3, 4)},       {"fuse.proj.w", randmat(12, 4)},
                                         {"fuse.proj.b", randmat(1, 4)}, {"head2.w", randmat(3, 4)},
                                         {"head2.b", randmat(3, 1)}};
        Mat probe = randmat(3, 1);
        cases.push_back({"fuse_and_predict", in, [cfg, probe](Tape& t, VarMap& v) {
                             Var logits = fuse_and_predict(v, cfg, v.at("u"), v.at("dd"),
                                                           v.at("cc"));
                             return sum_all(mul(logits, t.constant(probe)));
                         }});
    }

    // au_loss from logits
    {
        Eigen::VectorXd y(5), w(5);
        for (int i = 0; i < 5; ++i) {
            y(i) = (rng.uniform() < 0.5) ? 1.0 : 0.0;
            w(i) = 0.5 + rng.uniform();
        }
        cases.push_back({"au_loss",
                         {{"logits", randmat(5, 1)}},
                         [y, w](Tape&, VarMap& v) { return au_loss(v.at("logits"), y, w); }});
    }

    std::vector<GradCheckResult> results;
    for (const auto& c : cases) {
        // analytic gradients
        Tape tape;
        VarMap vars;
        for (const auto& [k, v] : c.inputs) vars.emplace(k, tape.leaf(v, true));
        Var root = c.build(tape, vars);
        tape.backward(root);

        auto value_at = [&c](const std::map<std::string, Mat>& inputs) {
            Tape t;
            VarMap vs;
            for (const auto& [k, v] : inputs) vs.emplace(k, t.leaf(v, false));
            return c.build(t, vs)->val(0, 0);
        };

        double max_rel = 0;
        for (const auto& [name, base] : c.inputs) {
            const Mat analytic = vars.at(name)->has_grad()
                                     ? vars.at(name)->grad
                                     : Mat::Zero(base.rows(), base.cols());
            for (Eigen::Index i = 0; i < base.rows(); ++i)
                for (Eigen::Index j = 0; j < base.cols(); ++j) {
                    auto inputs = c.inputs;
                    inputs.at(name)(i, j) = base(i, j) + fd_step;
                    double up = value_at(inputs);
                    inputs.at(name)(i, j) = base(i, j) - fd_step;
                    double down = value_at(inputs);
                    double numeric = (up - down) / (2 * fd_step);
                    double denom = std::max({1e-6, std::abs(numeric), std::abs(analytic(i, j))});
                    max_rel = std::max(max_rel, std::abs(numeric - analytic(i, j)) / denom);
                }
        }
        results.push_back({c.target, max_rel});
    }
    return results;
}

}  // namespace hiva
