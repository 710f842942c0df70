#include "batchsel/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "batchsel/errors.hpp"
#include "batchsel/rng.hpp"

namespace batchsel {

Dataset::Dataset(RowMatrix features, std::vector<int> labels, int num_classes)
    : features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes) {
    if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
        throw ConsistencyError("dataset: feature rows (" + std::to_string(features_.rows()) +
                               ") differ from label count (" +
                               std::to_string(labels_.size()) + ")");
    }
    if (num_classes_ < 1) {
        throw ArgumentError("dataset: num_classes must be positive");
    }
    for (int label : labels_) {
        if (label < 0 || label >= num_classes_) {
            throw ConsistencyError("dataset: label " + std::to_string(label) +
                                   " outside [0, " + std::to_string(num_classes_) + ")");
        }
    }
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
    if (first + count > size()) {
        throw ArgumentError("dataset slice exceeds row count");
    }
    RowMatrix rows = features_.middleRows(static_cast<Eigen::Index>(first),
                                          static_cast<Eigen::Index>(count));
    std::vector<int> labels(labels_.begin() + static_cast<std::ptrdiff_t>(first),
                            labels_.begin() + static_cast<std::ptrdiff_t>(first + count));
    return Dataset(std::move(rows), std::move(labels), num_classes_);
}

void Dataset::gather(std::span<const std::size_t> indices, RowMatrix& out_features,
                     std::vector<int>& out_labels) const {
    out_features.resize(static_cast<Eigen::Index>(indices.size()), features_.cols());
    out_labels.resize(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t i = indices[k];
        if (i >= size()) {
            throw ConsistencyError("datapoint index " + std::to_string(i) + " out of range");
        }
        out_features.row(static_cast<Eigen::Index>(k)) =
            features_.row(static_cast<Eigen::Index>(i));
        out_labels[k] = labels_[i];
    }
}

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
    std::array<unsigned char, 4> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), 4);
    if (!in) {
        throw IoError(path + ": truncated header");
    }
    return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
           (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
}

void write_be_u32(std::ofstream& out, std::uint32_t value) {
    const std::array<char, 4> bytes{static_cast<char>((value >> 24) & 0xff),
                                    static_cast<char>((value >> 16) & 0xff),
                                    static_cast<char>((value >> 8) & 0xff),
                                    static_cast<char>(value & 0xff)};
    out.write(bytes.data(), 4);
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    return out;
}

void read_payload(std::ifstream& in, std::vector<std::uint8_t>& buffer, const std::string& path) {
    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    if (static_cast<std::size_t>(in.gcount()) != buffer.size()) {
        throw IoError(path + ": truncated payload (expected " + std::to_string(buffer.size()) +
                      " bytes, got " + std::to_string(in.gcount()) + ")");
    }
}

}  // namespace

IdxImages read_idx_images(const std::string& path) {
    std::ifstream in = open_input(path);
    const std::uint32_t magic = read_be_u32(in, path);
    if (magic != kIdxImagesMagic) {
        throw FormatError(path + ": bad magic number for IDX images");
    }
    IdxImages images;
    images.count = read_be_u32(in, path);
    images.rows = read_be_u32(in, path);
    images.cols = read_be_u32(in, path);
    images.pixels.resize(std::size_t{images.count} * images.rows * images.cols);
    read_payload(in, images.pixels, path);
    return images;
}

IdxLabels read_idx_labels(const std::string& path) {
    std::ifstream in = open_input(path);
    const std::uint32_t magic = read_be_u32(in, path);
    if (magic != kIdxLabelsMagic) {
        throw FormatError(path + ": bad magic number for IDX labels");
    }
    IdxLabels labels;
    labels.labels.resize(read_be_u32(in, path));
    read_payload(in, labels.labels, path);
    return labels;
}

void write_idx_images(const std::string& path, const IdxImages& images) {
    if (images.pixels.size() != std::size_t{images.count} * images.rows * images.cols) {
        throw ConsistencyError("IDX image payload size does not match header");
    }
    std::ofstream out = open_output(path);
    write_be_u32(out, kIdxImagesMagic);
    write_be_u32(out, images.count);
    write_be_u32(out, images.rows);
    write_be_u32(out, images.cols);
    out.write(reinterpret_cast<const char*>(images.pixels.data()),
              static_cast<std::streamsize>(images.pixels.size()));
    if (!out) {
        throw IoError("failed writing " + path);
    }
}

void write_idx_labels(const std::string& path, const IdxLabels& labels) {
    std::ofstream out = open_output(path);
    write_be_u32(out, kIdxLabelsMagic);
    write_be_u32(out, static_cast<std::uint32_t>(labels.labels.size()));
    out.write(reinterpret_cast<const char*>(labels.labels.data()),
              static_cast<std::streamsize>(labels.labels.size()));
    if (!out) {
        throw IoError("failed writing " + path);
    }
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 int num_classes) {
    const IdxImages images = read_idx_images(images_path);
    const IdxLabels labels = read_idx_labels(labels_path);
    if (images.count != labels.labels.size()) {
        throw ConsistencyError("IDX item counts differ: " + std::to_string(images.count) +
                               " images vs " + std::to_string(labels.labels.size()) + " labels");
    }
    const std::size_t n = images.count;
    const std::size_t d = std::size_t{images.rows} * images.cols;
    RowMatrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                images.pixels[i * d + j] / 255.0;
        }
    }
    std::vector<int> label_ids(labels.labels.begin(), labels.labels.end());
    return Dataset(std::move(features), std::move(label_ids), num_classes);
}

DataSplit split(const Dataset& dataset, std::size_t n_train, std::size_t n_val) {
    if (n_train + n_val > dataset.size()) {
        throw ArgumentError("split sizes " + std::to_string(n_train) + " + " +
                            std::to_string(n_val) + " exceed dataset size " +
                            std::to_string(dataset.size()));
    }
    const std::size_t n_test = dataset.size() - n_train - n_val;
    return DataSplit{dataset.slice(0, n_train), dataset.slice(n_train, n_val),
                     dataset.slice(n_train + n_val, n_test)};
}

Dataset synthetic_blobs(std::size_t n, std::size_t d, int c, double spread, std::uint64_t seed) {
    if (c < 2 || n < static_cast<std::size_t>(c)) {
        throw ArgumentError("synthetic_blobs: need n >= c >= 2");
    }
    if (d < 1) {
        throw ArgumentError("synthetic_blobs: need d >= 1");
    }
    if (!(spread > 0.0)) {
        throw ArgumentError("synthetic_blobs: spread must be positive");
    }

    RowMatrix means(c, static_cast<Eigen::Index>(d));
    for (int k = 0; k < c; ++k) {
        const double angle = 2.0 * std::numbers::pi * k / c;
        for (std::size_t j = 0; j < d; ++j) {
            double value;
            if (d == 1) {
                value = 0.15 + 0.7 * k / (c - 1);
            } else if (j == 0) {
                value = 0.5 + 0.35 * std::cos(angle);
            } else if (j == 1) {
                value = 0.5 + 0.35 * std::sin(angle);
            } else {
                value = 0.5 + 0.25 * std::sin(angle * static_cast<double>(j + 1));
            }
            means(k, static_cast<Eigen::Index>(j)) = value;
        }
    }

    Rng rng(seed);
    RowMatrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % static_cast<std::size_t>(c));
        labels[i] = label;
        for (std::size_t j = 0; j < d; ++j) {
            const double value = means(label, static_cast<Eigen::Index>(j)) + spread * rng.normal();
            features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                std::clamp(value, 0.0, 1.0);
        }
    }
    return Dataset(std::move(features), std::move(labels), c);
}

}  // namespace batchsel
