#include "hiva/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace hiva {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double normal_quantile(double p) {
    // bisection on the normal CDF; called once per dataset
    double lo = -10, hi = 10;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        double cdf = 0.5 * (1.0 + std::erf(mid / std::sqrt(2.0)));
        (cdf < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

std::vector<LabelRow> load_label_table(const std::string& path, int au_count) {
    std::ifstream in(path);
    if (!in) throw ParseError("label table not found: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("label table has no header: " + path);
    auto header = split_csv(line);
    if (static_cast<int>(header.size()) != au_count + 1)
        throw ParseError(path + ": header declares " + std::to_string(header.size() - 1) +
                         " AU columns, expected " + std::to_string(au_count));
    std::vector<LabelRow> rows;
    int row_no = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row_no;
        auto cells = split_csv(line);
        if (static_cast<int>(cells.size()) != au_count + 1)
            throw ParseError(path + ": row " + std::to_string(row_no) + " has " +
                             std::to_string(cells.size() - 1) + " AU cells, expected " +
                             std::to_string(au_count));
        LabelRow r;
        r.sample_id = cells[0];
        r.labels.resize(au_count);
        for (int i = 0; i < au_count; ++i) {
            const std::string& c = cells[i + 1];
            if (c == "0")
                r.labels(i) = 0;
            else if (c == "1")
                r.labels(i) = 1;
            else
                throw ParseError(path + ": non-binary cell '" + c + "' at row " +
                                 std::to_string(row_no) + ", column \"" + header[i + 1] + "\"");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void save_label_table(const std::string& path, const std::vector<std::string>& au_names,
                      const std::vector<LabelRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write label table: " + path);
    out << "sample_id";
    for (const auto& n : au_names) out << "," << n;
    out << "\n";
    for (const auto& r : rows) {
        out << r.sample_id;
        for (Eigen::Index i = 0; i < r.labels.size(); ++i)
            out << "," << static_cast<int>(r.labels(i));
        out << "\n";
    }
}

DescriptionSet load_description_set(const std::string& path,
                                    const std::vector<std::string>& au_ids) {
    std::ifstream in(path);
    if (!in) throw ParseError("description file not found: " + path);
    std::map<std::string, std::vector<std::string>> parsed;
    std::string line, current;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == ' ' || line[0] == '\t') {
            std::size_t b = line.find_first_not_of(" \t");
            std::string variant = line.substr(b);
            if (current.empty())
                throw ParseError(path + ": variant line before any AU id: '" + variant + "'");
            auto& list = parsed[current];
            if (std::find(list.begin(), list.end(), variant) != list.end()) {
                std::cerr << "warning: duplicate description variant for " << current
                          << " dropped: \"" << variant << "\"\n";
                continue;
            }
            list.push_back(variant);
        } else {
            current = line;
            parsed.emplace(current, std::vector<std::string>{});
        }
    }
    DescriptionSet set;
    set.au_ids = au_ids;
    for (const auto& id : au_ids) {
        auto it = parsed.find(id);
        if (it == parsed.end())
            throw ParseError(path + ": AU '" + id + "' listed in config but absent from file");
        if (it->second.empty())
            throw ParseError(path + ": AU '" + id + "' has an empty variant list");
        set.variants.push_back(it->second);
    }
    return set;
}

void save_description_set(const std::string& path, const DescriptionSet& set) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write description file: " + path);
    for (std::size_t i = 0; i < set.au_ids.size(); ++i) {
        out << set.au_ids[i] << "\n";
        for (const auto& v : set.variants[i]) out << "  " << v << "\n";
    }
}

ClassWeights compute_class_weights(const std::vector<Eigen::VectorXd>& labels) {
    if (labels.empty()) throw ParseError("compute_class_weights: no samples");
    const Eigen::Index n = labels.front().size();
    Eigen::VectorXd pos = Eigen::VectorXd::Zero(n);
    for (const auto& y : labels) pos += y;
    const double count = static_cast<double>(labels.size());
    const double f_min = 1.0 / (2.0 * count);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double f = pos(i) / count;
        if (f < f_min) {
            if (pos(i) == 0)
                std::cerr << "warning: AU index " << i
                          << " has zero positives; frequency clamped to " << f_min << "\n";
            f = f_min;
        }
        w(i) = 1.0 / f;
    }
    w *= static_cast<double>(n) / w.sum();  // mean exactly 1
    ClassWeights cw;
    cw.w = w;
    return cw;
}

ClassWeights compute_class_weights(const std::vector<AUSample>& samples) {
    std::vector<Eigen::VectorXd> labels;
    labels.reserve(samples.size());
    for (const auto& s : samples) labels.push_back(s.labels);
    return compute_class_weights(labels);
}

std::vector<std::array<int, 4>> default_regions(int n_aus, int image_size) {
    const int cell = 8;
    // Preferred layout: 2x2-cell regions centered on interior stride-8 cell
    // centers, so each pattern sits squarely on one feature cell while the
    // region tolerates a one-cell localization spread. Falls back to single
    // cells on a corner grid when space is tight.
    int region = 2 * cell;
    int per_row = image_size / cell - 1;
    if (per_row < 1 || per_row * per_row < n_aus) {
        region = cell;
        per_row = image_size / cell;
    }
    if (n_aus > per_row * per_row)
        throw ParseError("default_regions: too many AUs for image size");
    std::vector<std::array<int, 4>> regions;
    // spread across the grid so neighboring AUs land in different slots
    for (int i = 0; i < n_aus; ++i) {
        int slot = (i * 5 + 2) % (per_row * per_row);
        // ensure distinct slots
        bool clash = true;
        while (clash) {
            clash = false;
            for (const auto& r : regions)
                if (r[0] == (slot % per_row) * cell && r[1] == (slot / per_row) * cell) {
                    slot = (slot + 1) % (per_row * per_row);
                    clash = true;
                    break;
                }
        }
        regions.push_back({(slot % per_row) * cell, (slot / per_row) * cell, region, region});
    }
    return regions;
}

std::vector<AUSample> generate_synthetic_dataset(const SyntheticSpec& spec, int n_aus,
                                                 int image_size) {
    auto regions = spec.regions.empty() ? default_regions(n_aus, image_size) : spec.regions;
    for (const auto& r : regions)
        if (r[0] < 0 || r[1] < 0 || r[2] < 3 || r[3] < 3 || r[0] + r[2] > image_size ||
            r[1] + r[3] > image_size)
            throw ParseError("synthetic region out of bounds");

    // Cholesky factor of the label correlation matrix
    ad::Mat sigma = ad::Mat::Identity(n_aus, n_aus);
    if (!spec.cooccurrence.empty())
        for (int i = 0; i < n_aus; ++i)
            for (int j = 0; j < n_aus; ++j) sigma(i, j) = spec.cooccurrence[i][j];
    Eigen::LLT<ad::Mat> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw ParseError("cooccurrence matrix is not positive definite");
    ad::Mat chol = llt.matrixL();
    const double thresh = normal_quantile(spec.base_rate);

    std::vector<AUSample> out;
    out.reserve(spec.n_samples);
    for (int s = 0; s < spec.n_samples; ++s) {
        Rng rng(Rng::derive(spec.seed, static_cast<std::uint64_t>(s)));
        Eigen::VectorXd g(n_aus);
        for (int i = 0; i < n_aus; ++i) g(i) = rng.normal();
        Eigen::VectorXd z = chol * g;
        AUSample sample;
        sample.sample_id = "syn" + std::to_string(s);
        sample.image_size = image_size;
        sample.labels.resize(n_aus);
        for (int i = 0; i < n_aus; ++i) sample.labels(i) = z(i) < thresh ? 1.0 : 0.0;

        ad::Mat img(image_size * image_size, 3);
        for (Eigen::Index p = 0; p < img.rows(); ++p) {
            double v = 0.10 + 0.05 * rng.uniform();
            img(p, 0) = img(p, 1) = img(p, 2) = v;
        }
        for (int i = 0; i < n_aus; ++i) {
            if (sample.labels(i) == 0.0) continue;
            const auto& r = regions[i];
            int jx = static_cast<int>(rng.below(3)) - 1, jy = static_cast<int>(rng.below(3)) - 1;
            double bright = 0.80 + 0.15 * rng.uniform();
            // compact pattern centered in the region, jittered by one pixel
            int w = std::min(6, std::min(r[2], r[3]) - 2), h = w;
            int x0 = std::clamp(r[0] + (r[2] - w) / 2 + jx, r[0], r[0] + r[2] - w);
            int y0 = std::clamp(r[1] + (r[3] - h) / 2 + jy, r[1], r[1] + r[3] - h);
            // per-AU signature: a distinct color mix plus stripe orientation,
            // so regions are identifiable by content rather than position
            static const double palette[6][3] = {{1.00, 0.25, 0.25}, {0.25, 1.00, 0.25},
                                                 {0.25, 0.25, 1.00}, {1.00, 1.00, 0.25},
                                                 {1.00, 0.25, 1.00}, {0.25, 1.00, 1.00}};
            const double* mix = palette[i % 6];
            int period = 2 + (i / 6) % 3;
            for (int y = y0; y < y0 + h; ++y)
                for (int x = x0; x < x0 + w; ++x) {
                    Eigen::Index p = static_cast<Eigen::Index>(y) * image_size + x;
                    int phase = (i % 2 == 0 ? x - x0 : y - y0) / period;
                    double stripe = phase % 2 == 0 ? 1.0 : 0.55;
                    for (int ch = 0; ch < 3; ++ch)
                        img(p, ch) = std::min(1.0, img(p, ch) + bright * mix[ch] * stripe);
                }
        }
        sample.image = std::move(img);
        out.push_back(std::move(sample));
    }
    return out;
}

void write_ppm(const std::string& path, const ad::Mat& image, int size) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write image: " + path);
    out << "P6\n" << size << " " << size << "\n255\n";
    for (Eigen::Index p = 0; p < image.rows(); ++p)
        for (int ch = 0; ch < 3; ++ch) {
            int v = static_cast<int>(std::lround(image(p, ch) * 255.0));
            out.put(static_cast<char>(std::clamp(v, 0, 255)));
        }
}

ad::Mat read_ppm(const std::string& path, int& size_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot read image: " + path);
    std::string magic;
    int w, h, maxval;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w != h)
        throw ParseError("unsupported image format: " + path);
    in.get();  // single whitespace after header
    ad::Mat img(static_cast<Eigen::Index>(w) * h, 3);
    for (Eigen::Index p = 0; p < img.rows(); ++p)
        for (int ch = 0; ch < 3; ++ch)
            img(p, ch) = static_cast<unsigned char>(in.get()) / 255.0;
    size_out = w;
    return img;
}

void write_dataset(const std::string& dir, const std::vector<AUSample>& samples,
                   const std::vector<std::string>& au_names, const nlohmann::json& manifest) {
    fs::create_directories(fs::path(dir) / "images");
    std::vector<LabelRow> rows;
    for (const auto& s : samples) {
        write_ppm((fs::path(dir) / "images" / (s.sample_id + ".ppm")).string(), s.image,
                  s.image_size);
        rows.push_back({s.sample_id, s.labels});
    }
    save_label_table((fs::path(dir) / "labels.csv").string(), au_names, rows);
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

std::vector<AUSample> load_dataset(const std::string& dir, int au_count) {
    auto rows = load_label_table((fs::path(dir) / "labels.csv").string(), au_count);
    std::vector<AUSample> out;
    out.reserve(rows.size());
    for (auto& r : rows) {
        AUSample s;
        s.sample_id = r.sample_id;
        s.labels = std::move(r.labels);
        s.image = read_ppm((fs::path(dir) / "images" / (s.sample_id + ".ppm")).string(),
                           s.image_size);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Batch> make_batches(const std::vector<AUSample>& samples, int batch_size,
                                std::uint64_t seed, int epoch) {
    if (batch_size < 1) throw ParseError("batch_size must be >= 1");
    std::vector<int> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(idx);
    std::vector<Batch> batches;
    for (std::size_t at = 0; at < idx.size(); at += batch_size) {
        Batch b;
        for (std::size_t i = at; i < std::min(idx.size(), at + batch_size); ++i)
            b.samples.push_back(&samples[idx[i]]);
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace hiva
