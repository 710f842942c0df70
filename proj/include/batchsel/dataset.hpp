#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace batchsel {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Labelled classification data addressed by datapoint index.
///
/// Features are stored one datapoint per row, scaled into [0, 1]. Immutable
/// after construction; the constructor validates shapes and label range.
class Dataset {
public:
    Dataset() = default;
    Dataset(RowMatrix features, std::vector<int> labels, int num_classes);

    std::size_t size() const { return labels_.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
    int num_classes() const { return num_classes_; }
    bool empty() const { return labels_.empty(); }

    const RowMatrix& features() const { return features_; }
    const std::vector<int>& labels() const { return labels_; }

    /// Copies the rows [first, first + count) into a new dataset.
    Dataset slice(std::size_t first, std::size_t count) const;

    /// Copies the given rows (in order, duplicates allowed) into out_features
    /// and out_labels.
    void gather(std::span<const std::size_t> indices, RowMatrix& out_features,
                std::vector<int>& out_labels) const;

private:
    RowMatrix features_;
    std::vector<int> labels_;
    int num_classes_ = 0;
};

struct DataSplit {
    Dataset train;
    Dataset validation;
    Dataset test;
};

/// Raw contents of an IDX image file (magic 0x00000803).
struct IdxImages {
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major
};

/// Raw contents of an IDX label file (magic 0x00000801).
struct IdxLabels {
    std::vector<std::uint8_t> labels;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

IdxImages read_idx_images(const std::string& path);
IdxLabels read_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& images);
void write_idx_labels(const std::string& path, const IdxLabels& labels);

/// Loads an IDX image/label pair, dividing pixel bytes by 255.
///
/// Throws FormatError on a wrong magic number, ConsistencyError when the
/// item counts differ or a label is outside [0, num_classes), and IoError
/// when a file is missing or truncated.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 int num_classes = 10);

/// Contiguous split: the first n_train rows, the next n_val rows, the rest.
DataSplit split(const Dataset& dataset, std::size_t n_train, std::size_t n_val);

/// Deterministic Gaussian clusters, one per class, clamped into [0, 1].
///
/// Class means are a fixed function of (class, c, d): spread along a line
/// for d = 1, around a circle in the first two coordinates otherwise. Labels
/// cycle 0, 1, ..., c-1 so classes are balanced up to the remainder.
Dataset synthetic_blobs(std::size_t n, std::size_t d, int c, double spread,
                        std::uint64_t seed);

}  // namespace batchsel
