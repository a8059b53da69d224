#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedul/errors.hpp"
#include "fedul/model.hpp"

namespace fedul {

struct Dataset {
    std::vector<double> x; // n * features, sample-major, values expected finite
    std::vector<int> y;
    int n = 0;
    int h = 0;
    int w = 0;
    int c = 1;
    int classes = 0;
    std::string split = "train";

    int features() const { return h * w * c; }
    void validate() const; // throws DataError
};

// IDX ingestion (big-endian magic + dims). Pixels are scaled to [0,1].
// Bad magic, truncation and image/label count mismatch raise DataError
// with distinguishable messages.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Inverse of load_idx for fixtures; values are clamped to [0,1] and
// quantized to bytes.
void write_idx(const Dataset& d, const std::string& images_path,
               const std::string& labels_path);

// Gaussian clusters with unit variance, one per class, means on a scaled
// simplex. Stored as 1 x features images.
Dataset synth_blobs(int class_count, int per_class, int features, std::uint64_t seed);

// Image-shaped synthetic benchmark data: each class gets a smooth random
// template; samples are jittered, noisy copies. similarity blends all
// templates toward a shared base field (harder task), label_noise relabels
// a fraction of samples uniformly (forces memorization, which gives the
// membership-inference attack a measurable signal).
struct SynthImageConfig {
    int h = 28;
    int w = 28;
    int grid = 7;              // coarse field resolution behind each template
    double noise = 0.25;       // per-pixel gaussian sigma
    double similarity = 0.0;   // 0 = independent templates, ->1 = near-identical
    double jitter = 0.15;      // multiplicative intensity jitter
    double label_noise = 0.0;  // fraction of samples relabeled
};

Dataset synth_images(const std::vector<int>& per_class, const SynthImageConfig& cfg,
                     std::uint64_t seed, const std::string& split);

// Relabels round(fraction * n) samples, chosen without replacement, to a
// uniformly drawn different class. Runs after partitioning so class-count
// bookkeeping stays exact.
void corrupt_labels(Dataset& d, double fraction, std::uint64_t seed);

// Batch views into a dataset.
Batch gather(const Dataset& d, const std::vector<int>& indices);
Batch full_batch(const Dataset& d);

} // namespace fedul
