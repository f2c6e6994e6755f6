#pragma once

#include "hiva/data.hpp"
#include "hiva/model.hpp"

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace hiva {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- checkpointing ---
struct CheckpointMeta {
    int stage = 0;
    int epoch = 0;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string rng_state;
};

// Binary parameter blob at `path`, human-readable manifest at
// `path + ".manifest.json"`. save -> load -> save is byte-identical.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const CheckpointMeta& meta);
CheckpointMeta load_checkpoint(const std::string& path, ParamStore& params,
                               const std::string& expected_config_hash);
std::uint64_t checkpoint_file_hash(const std::string& path);

// --- optimizer: Adam, deterministic name-ordered updates ---
class AdamOptimizer {
public:
    AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Applies one step from the leaf gradients in `vars`, touching only
    // parameters accepted by `trainable`.
    void step(ParamStore& params, const VarMap& vars,
              const std::function<bool(const std::string&)>& trainable);

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, ad::Mat> m_, v_;
};

struct EpochLog {
    int epoch = 0;
    double l_au = 0;
    double l_diff = 0;
    double l_tot = 0;
    double mean_f1 = 0;
    double wall_time = 0;
};

// L_tot = L_au + lambda * L_diff; rejects non-finite inputs.
double total_loss(double l_au, double l_diff, double lambda);

class TrainingEngine {
public:
    TrainingEngine(const RunConfig& cfg, const std::vector<AUSample>& samples,
                   const DescriptionSet* descriptions, const Vocab* vocab);

    // Stage 1 on a fresh (or resumed) model.
    CheckpointMeta train_stage1(Model& model, std::optional<CheckpointMeta> resume = {});
    // Stage 2; model must carry stage-1 parameters already (loaded by caller).
    CheckpointMeta train_stage2(Model& model, std::optional<CheckpointMeta> resume = {});

    const std::vector<EpochLog>& log() const { return log_; }
    const ClassWeights& weights() const { return weights_; }
    int steps_taken() const { return steps_; }

private:
    const RunConfig& cfg_;
    const std::vector<AUSample>& samples_;
    const DescriptionSet* descriptions_;
    const Vocab* vocab_;
    ClassWeights weights_;
    std::vector<EpochLog> log_;
    int steps_ = 0;
};

// --- finite-difference gradient verification ---
struct GradCheckResult {
    std::string target;
    double max_rel_error = 0;
};
std::vector<GradCheckResult> gradient_check(std::uint64_t seed = 99, double fd_step = 1e-5);

}  // namespace hiva
