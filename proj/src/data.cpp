#include "tabudrop/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "tabudrop/errors.hpp"
#include "tabudrop/rng.hpp"

namespace tabudrop {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw IoError("truncated header in " + path);
    return (std::uint32_t{buf[0]} << 24) | (std::uint32_t{buf[1]} << 16) |
           (std::uint32_t{buf[2]} << 8) | std::uint32_t{buf[3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open image file: " + images_path);
    std::ifstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw IoError("cannot open label file: " + labels_path);

    if (read_be32(img, images_path) != kImageMagic)
        throw FormatError("bad image magic in " + images_path);
    const std::uint32_t img_count = read_be32(img, images_path);
    const std::uint32_t rows = read_be32(img, images_path);
    const std::uint32_t cols = read_be32(img, images_path);

    if (read_be32(lbl, labels_path) != kLabelMagic)
        throw FormatError("bad label magic in " + labels_path);
    const std::uint32_t lbl_count = read_be32(lbl, labels_path);

    if (img_count != lbl_count)
        throw ConsistencyError("image/label counts disagree: " +
                               std::to_string(img_count) + " vs " +
                               std::to_string(lbl_count));

    const std::size_t width = std::size_t{rows} * cols;
    Dataset ds;
    ds.features = Matrix(img_count, width);
    ds.labels.resize(img_count);

    std::vector<unsigned char> pixel_row(width);
    for (std::uint32_t i = 0; i < img_count; ++i) {
        img.read(reinterpret_cast<char*>(pixel_row.data()),
                 static_cast<std::streamsize>(width));
        if (!img) throw IoError("truncated image data in " + images_path);
        double* dst = ds.features.row(i);
        for (std::size_t c = 0; c < width; ++c)
            dst[c] = static_cast<double>(pixel_row[c]) / 255.0;
    }

    std::vector<unsigned char> raw_labels(img_count);
    lbl.read(reinterpret_cast<char*>(raw_labels.data()),
             static_cast<std::streamsize>(raw_labels.size()));
    if (!lbl && img_count > 0)
        throw IoError("truncated label data in " + labels_path);

    int max_label = -1;
    for (std::uint32_t i = 0; i < img_count; ++i) {
        ds.labels[i] = raw_labels[i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.classes = max_label + 1;
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path, std::size_t rows,
              std::size_t cols) {
    if (rows * cols != ds.feature_width())
        throw ShapeError("rows * cols does not match feature width");

    std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
    if (!img) throw IoError("cannot open image file for writing: " + images_path);
    write_be32(img, kImageMagic);
    write_be32(img, static_cast<std::uint32_t>(ds.size()));
    write_be32(img, static_cast<std::uint32_t>(rows));
    write_be32(img, static_cast<std::uint32_t>(cols));
    std::vector<unsigned char> pixel_row(ds.feature_width());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* src = ds.features.row(i);
        for (std::size_t c = 0; c < pixel_row.size(); ++c) {
            const double q = std::round(src[c] * 255.0);
            pixel_row[c] = static_cast<unsigned char>(
                std::clamp(q, 0.0, 255.0));
        }
        img.write(reinterpret_cast<const char*>(pixel_row.data()),
                  static_cast<std::streamsize>(pixel_row.size()));
    }
    if (!img) throw IoError("image write failed: " + images_path);

    std::ofstream lbl(labels_path, std::ios::binary | std::ios::trunc);
    if (!lbl) throw IoError("cannot open label file for writing: " + labels_path);
    write_be32(lbl, kLabelMagic);
    write_be32(lbl, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const unsigned char b = static_cast<unsigned char>(ds.labels[i]);
        lbl.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!lbl) throw IoError("label write failed: " + labels_path);
}

Dataset synth_blobs(std::size_t n, std::size_t d, int classes, double spread,
                    std::uint64_t seed) {
    if (classes <= 0) throw std::invalid_argument("classes must be positive");
    if (d == 0) throw std::invalid_argument("feature width must be positive");
    if (spread < 0.0) throw std::invalid_argument("spread must be non-negative");
    if (n < static_cast<std::size_t>(classes))
        throw std::invalid_argument("need at least one point per class");

    Rng mean_rng(derive_seed(seed, 0xB10B5));
    Matrix means(static_cast<std::size_t>(classes), d);
    for (auto& m : means.values()) m = mean_rng.uniform(0.2, 0.8);

    Rng point_rng(derive_seed(seed, 0xB10B5 + 1));
    Dataset ds;
    ds.features = Matrix(n, d);
    ds.labels.resize(n);
    ds.classes = classes;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
        ds.labels[i] = label;
        const double* mean = means.row(static_cast<std::size_t>(label));
        double* dst = ds.features.row(i);
        for (std::size_t c = 0; c < d; ++c) {
            const double x = mean[c] + spread * point_rng.normal();
            dst[c] = std::clamp(x, 0.0, 1.0);
        }
    }
    return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction,
                                          std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw std::invalid_argument("split fraction must be in [0, 1]");
    Rng rng(derive_seed(seed, 0x5B117));
    const auto idx = shuffled_indices(ds.size(), rng);
    const std::size_t head =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));

    auto take = [&](std::size_t begin, std::size_t end) {
        Dataset part;
        part.features = Matrix(end - begin, ds.feature_width());
        part.labels.resize(end - begin);
        part.classes = ds.classes;
        for (std::size_t i = begin; i < end; ++i) {
            std::memcpy(part.features.row(i - begin), ds.features.row(idx[i]),
                        ds.feature_width() * sizeof(double));
            part.labels[i - begin] = ds.labels[idx[i]];
        }
        return part;
    };
    return {take(0, head), take(head, ds.size())};
}

std::vector<std::vector<std::size_t>> batches(std::size_t n,
                                              const BatchPlan& plan,
                                              std::uint64_t epoch) {
    if (plan.batch_size == 0)
        throw std::invalid_argument("batch size must be positive");
    Rng rng(derive_seed(plan.shuffle_seed, epoch));
    const auto idx = shuffled_indices(n, rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += plan.batch_size) {
        const std::size_t end = std::min(start + plan.batch_size, n);
        out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                         idx.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

Matrix gather_rows(const Matrix& features, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= features.rows())
            throw std::out_of_range("row index out of range");
        std::memcpy(out.row(i), features.row(idx[i]),
                    features.cols() * sizeof(double));
    }
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<std::size_t>& idx) {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= labels.size())
            throw std::out_of_range("label index out of range");
        out[i] = labels[idx[i]];
    }
    return out;
}

}  // namespace tabudrop
