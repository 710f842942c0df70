#include <doctest.h>

#include <cmath>

#include "batchsel/dataset.hpp"
#include "batchsel/errors.hpp"
#include "batchsel/model.hpp"
#include "batchsel/optim.hpp"
#include "batchsel/rng.hpp"
#include "test_helpers.hpp"

using namespace batchsel;

namespace {

// Two 2x2 images: all-black and all-white, labels 3 and 7.
std::vector<unsigned char> tiny_images() {
    return {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
            0, 0, 0, 0, 255, 255, 255, 255};
}

std::vector<unsigned char> tiny_labels() { return {0, 0, 8, 1, 0, 0, 0, 2, 3, 7}; }

}  // namespace

TEST_CASE("load_idx scales pixel bytes into [0, 1]") {
    testing::TempDir dir("idx");
    testing::write_bytes(dir.file("img"), tiny_images());
    testing::write_bytes(dir.file("lbl"), tiny_labels());

    const Dataset data = load_idx(dir.file("img"), dir.file("lbl"));
    CHECK(data.size() == 2);
    CHECK(data.dim() == 4);
    CHECK(data.num_classes() == 10);
    for (int j = 0; j < 4; ++j) {
        CHECK(data.features()(0, j) == 0.0);
        CHECK(data.features()(1, j) == 1.0);
    }
    CHECK(data.labels() == std::vector<int>{3, 7});
}

TEST_CASE("load_idx rejects swapped magic numbers") {
    testing::TempDir dir("idx");
    auto images = tiny_images();
    images[3] = 0x01;
    testing::write_bytes(dir.file("img"), images);
    testing::write_bytes(dir.file("lbl"), tiny_labels());
    CHECK_THROWS_AS(load_idx(dir.file("img"), dir.file("lbl")), FormatError);

    testing::write_bytes(dir.file("img"), tiny_images());
    auto labels = tiny_labels();
    labels[3] = 0x03;
    testing::write_bytes(dir.file("lbl"), labels);
    CHECK_THROWS_AS(load_idx(dir.file("img"), dir.file("lbl")), FormatError);
}

TEST_CASE("load_idx detects count mismatch, truncation and missing files") {
    testing::TempDir dir("idx");
    testing::write_bytes(dir.file("img"), tiny_images());

    auto labels = tiny_labels();
    labels[7] = 3;
    labels.push_back(1);
    testing::write_bytes(dir.file("lbl"), labels);
    CHECK_THROWS_AS(load_idx(dir.file("img"), dir.file("lbl")), ConsistencyError);

    auto truncated = tiny_images();
    truncated.pop_back();
    testing::write_bytes(dir.file("short"), truncated);
    testing::write_bytes(dir.file("lbl"), tiny_labels());
    CHECK_THROWS_AS(load_idx(dir.file("short"), dir.file("lbl")), IoError);

    testing::write_bytes(dir.file("header"), {0, 0, 8});
    CHECK_THROWS_AS(load_idx(dir.file("header"), dir.file("lbl")), IoError);

    CHECK_THROWS_AS(load_idx(dir.file("absent"), dir.file("lbl")), IoError);
}

TEST_CASE("load_idx rejects labels outside the class range") {
    testing::TempDir dir("idx");
    testing::write_bytes(dir.file("img"), tiny_images());
    auto labels = tiny_labels();
    labels[9] = 12;
    testing::write_bytes(dir.file("lbl"), labels);
    CHECK_THROWS_AS(load_idx(dir.file("img"), dir.file("lbl")), ConsistencyError);
}

TEST_CASE("IDX files round-trip byte for byte") {
    testing::TempDir dir("idx");
    // Random-looking payload with 3 images of 4x5 pixels.
    IdxImages images{3, 4, 5, {}};
    Rng rng(11);
    for (int i = 0; i < 60; ++i) images.pixels.push_back(static_cast<std::uint8_t>(rng.uniform_index(256)));
    IdxLabels labels{{4, 0, 9}};
    write_idx_images(dir.file("img"), images);
    write_idx_labels(dir.file("lbl"), labels);
    const auto image_bytes = testing::read_bytes(dir.file("img"));
    const auto label_bytes = testing::read_bytes(dir.file("lbl"));

    // Load through the public path, then re-serialize from the features.
    const Dataset data = load_idx(dir.file("img"), dir.file("lbl"));
    IdxImages again{3, 4, 5, {}};
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.dim(); ++j) {
            again.pixels.push_back(static_cast<std::uint8_t>(
                std::lround(data.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * 255.0)));
        }
    }
    IdxLabels labels_again;
    for (int label : data.labels()) labels_again.labels.push_back(static_cast<std::uint8_t>(label));
    write_idx_images(dir.file("img2"), again);
    write_idx_labels(dir.file("lbl2"), labels_again);
    CHECK(testing::read_bytes(dir.file("img2")) == image_bytes);
    CHECK(testing::read_bytes(dir.file("lbl2")) == label_bytes);
}

TEST_CASE("split is contiguous and checks sizes") {
    const Dataset data = synthetic_blobs(10, 2, 2, 0.1, 3);

    const DataSplit parts = split(data, 6, 3);
    CHECK(parts.train.size() == 6);
    CHECK(parts.validation.size() == 3);
    CHECK(parts.test.size() == 1);
    CHECK(parts.validation.features().row(0) == data.features().row(6));
    CHECK(parts.test.labels()[0] == data.labels()[9]);

    const DataSplit all = split(data, 10, 0);
    CHECK(all.train.size() == 10);
    CHECK(all.validation.empty());
    CHECK(all.test.empty());

    CHECK_THROWS_AS(split(data, 8, 4), ArgumentError);
}

TEST_CASE("synthetic_blobs is deterministic, balanced and clamped") {
    const Dataset a = synthetic_blobs(100, 2, 2, 0.05, 1);
    const Dataset b = synthetic_blobs(100, 2, 2, 0.05, 1);
    CHECK(a.features() == b.features());
    CHECK(a.labels() == b.labels());
    CHECK(a.features().minCoeff() >= 0.0);
    CHECK(a.features().maxCoeff() <= 1.0);

    const Dataset c = synthetic_blobs(103, 3, 5, 0.5, 9);
    std::vector<int> counts(5, 0);
    for (int label : c.labels()) ++counts[static_cast<std::size_t>(label)];
    for (int k = 0; k < 5; ++k) CHECK(counts[static_cast<std::size_t>(k)] >= 20);
    CHECK(c.features().minCoeff() >= 0.0);
    CHECK(c.features().maxCoeff() <= 1.0);

    CHECK(synthetic_blobs(100, 2, 2, 0.05, 2).features() != a.features());
}

TEST_CASE("synthetic_blobs rejects invalid shapes") {
    CHECK_THROWS_AS(synthetic_blobs(3, 1, 5, 0.1, 1), ArgumentError);
    CHECK_THROWS_AS(synthetic_blobs(10, 0, 2, 0.1, 1), ArgumentError);
    CHECK_THROWS_AS(synthetic_blobs(10, 2, 1, 0.1, 1), ArgumentError);
    CHECK_THROWS_AS(synthetic_blobs(10, 2, 2, 0.0, 1), ArgumentError);
}

TEST_CASE("tight blobs are linearly separable by a trained softmax layer") {
    const Dataset data = synthetic_blobs(100, 2, 2, 0.01, 1);
    ModelParams params = init_params({2, 2}, Activation::relu, 1);
    Adam adam(params.size(), 0.05);
    for (int step = 0; step < 2000; ++step) {
        const BatchResult r = forward_backward(params, data.features(), data.labels());
        adam.step(params.flat(), r.gradient);
    }
    CHECK(evaluate(params, data, 100).error_rate == 0.0);
}

TEST_CASE("gather copies requested rows in order") {
    const Dataset data = synthetic_blobs(20, 3, 4, 0.2, 5);
    RowMatrix rows;
    std::vector<int> labels;
    const std::vector<std::size_t> picks{7, 2, 7};
    data.gather(picks, rows, labels);
    CHECK(rows.rows() == 3);
    CHECK(rows.row(0) == data.features().row(7));
    CHECK(rows.row(1) == data.features().row(2));
    CHECK(labels == std::vector<int>{data.labels()[7], data.labels()[2], data.labels()[7]});
    const std::vector<std::size_t> bad{20};
    CHECK_THROWS_AS(data.gather(bad, rows, labels), ConsistencyError);
}
