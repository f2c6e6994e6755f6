#pragma once

#include "hiva/autodiff.hpp"
#include "hiva/config.hpp"
#include "hiva/rng.hpp"

#include <string>
#include <vector>

namespace hiva {

// One labeled face sample. The image is stored row-major spatially,
// [H*W x 3], values in [0,1].
struct AUSample {
    std::string sample_id;
    Eigen::VectorXd labels;  // entries in {0,1}
    ad::Mat image;
    int image_size = 0;
};

struct DescriptionSet {
    std::vector<std::string> au_ids;                     // canonical ordering
    std::vector<std::vector<std::string>> variants;      // per AU, M >= 1
};

struct ClassWeights {
    Eigen::VectorXd w;  // positive, mean 1
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- label tables (UTF-8 CSV: sample_id,<AU names...>, cells 0/1) ---
struct LabelRow {
    std::string sample_id;
    Eigen::VectorXd labels;
};
std::vector<LabelRow> load_label_table(const std::string& path, int au_count);
void save_label_table(const std::string& path, const std::vector<std::string>& au_names,
                      const std::vector<LabelRow>& rows);

// --- description files (id line, then one indented variant per line) ---
DescriptionSet load_description_set(const std::string& path,
                                    const std::vector<std::string>& au_ids);
void save_description_set(const std::string& path, const DescriptionSet& set);

ClassWeights compute_class_weights(const std::vector<AUSample>& samples);
ClassWeights compute_class_weights(const std::vector<Eigen::VectorXd>& labels);

// --- synthetic verification dataset ---
// Default per-AU regions: 8x8 cells on a grid, one per AU.
std::vector<std::array<int, 4>> default_regions(int n_aus, int image_size);
std::vector<AUSample> generate_synthetic_dataset(const SyntheticSpec& spec, int n_aus,
                                                 int image_size);
// Writes images (PPM), labels.csv and manifest.json under dir.
void write_dataset(const std::string& dir, const std::vector<AUSample>& samples,
                   const std::vector<std::string>& au_names, const nlohmann::json& manifest);
std::vector<AUSample> load_dataset(const std::string& dir, int au_count);

// --- batching ---
struct Batch {
    std::vector<const AUSample*> samples;
};
// Deterministic epoch-level shuffle; the last partial batch is kept.
std::vector<Batch> make_batches(const std::vector<AUSample>& samples, int batch_size,
                                std::uint64_t seed, int epoch);

// --- lossless 8-bit PPM image IO ---
void write_ppm(const std::string& path, const ad::Mat& image, int size);
ad::Mat read_ppm(const std::string& path, int& size_out);

}  // namespace hiva
