#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tabudrop/matrix.hpp"

namespace tabudrop {

/// Immutable classification dataset: features in [0, 1], labels in
/// [0, classes). Freely shareable across threads after construction.
struct Dataset {
    Matrix features;           // n x d
    std::vector<int> labels;   // n
    int classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_width() const { return features.cols(); }
};

/// Loads an IDX image/label file pair (the MNIST container format).
/// Pixels are divided by 255; images are flattened row-major. The image
/// file must carry magic 0x00000803 and the label file 0x00000801, both
/// big-endian. Throws IoError on open/truncation, FormatError on bad
/// magic, ConsistencyError when the two files disagree on the count.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes a dataset as an IDX pair, quantizing features to bytes
/// (round(x * 255)). rows * cols must equal the feature width.
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path, std::size_t rows,
              std::size_t cols);

/// Seeded Gaussian-blob classification data: one isotropic blob per class,
/// means placed deterministically from the seed, points clipped to [0, 1],
/// labels assigned round-robin so classes stay balanced.
Dataset synth_blobs(std::size_t n, std::size_t d, int classes, double spread,
                    std::uint64_t seed);

/// Deterministic head/tail split (head = first `fraction` after a seeded
/// shuffle); used for the optional validation carve-out.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction,
                                          std::uint64_t seed);

struct BatchPlan {
    std::size_t batch_size = 512;
    std::uint64_t shuffle_seed = 0;
};

/// Index slices covering [0, n) exactly once in a per-(seed, epoch)
/// deterministic shuffled order. The final batch may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t n,
                                              const BatchPlan& plan,
                                              std::uint64_t epoch);

/// Gathers the given rows into a contiguous batch.
Matrix gather_rows(const Matrix& features, const std::vector<std::size_t>& idx);
std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<std::size_t>& idx);

}  // namespace tabudrop
