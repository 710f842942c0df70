#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "batchsel/dataset.hpp"

namespace batchsel {

enum class Activation { relu, tanh };

/// Parameters of a fully connected softmax classifier.
///
/// All weights and biases live in one flat vector so optimizers can step it
/// directly. Layer l occupies a fan_in x fan_out row-major weight block
/// followed by its fan_out biases. Hidden layers apply the activation; the
/// last layer produces logits.
class ModelParams {
public:
    using WeightMap = Eigen::Map<RowMatrix>;
    using ConstWeightMap = Eigen::Map<const RowMatrix>;
    using BiasMap = Eigen::Map<Eigen::RowVectorXd>;
    using ConstBiasMap = Eigen::Map<const Eigen::RowVectorXd>;

    ModelParams() = default;
    /// Zero-initialized parameters for the given layer sizes (inputs first).
    ModelParams(std::vector<std::size_t> layer_sizes, Activation activation);

    const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }
    Activation activation() const { return activation_; }
    std::size_t num_layers() const { return layer_sizes_.size() - 1; }
    std::size_t input_dim() const { return layer_sizes_.front(); }
    std::size_t num_classes() const { return layer_sizes_.back(); }
    std::size_t size() const { return values_.size(); }

    std::span<double> flat() { return values_; }
    std::span<const double> flat() const { return values_; }

    /// Copy of the flat parameter vector.
    std::vector<double> flatten() const { return values_; }
    /// Replaces all parameters; the length must equal size().
    void unflatten(std::span<const double> values);

    WeightMap weights(std::size_t layer);
    ConstWeightMap weights(std::size_t layer) const;
    BiasMap bias(std::size_t layer);
    ConstBiasMap bias(std::size_t layer) const;

    /// Offset of a layer's weight block inside the flat vector.
    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const {
        return offsets_[layer] + layer_sizes_[layer] * layer_sizes_[layer + 1];
    }

private:
    std::vector<std::size_t> layer_sizes_;
    Activation activation_ = Activation::relu;
    std::vector<std::size_t> offsets_;
    std::vector<double> values_;
};

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
ModelParams init_params(const std::vector<std::size_t>& layer_sizes, Activation activation,
                        std::uint64_t seed);

struct BatchResult {
    std::vector<double> per_example_losses;  // cross-entropy in nats
    double mean_loss = 0.0;
    std::vector<double> gradient;  // d(weighted mean loss) / d(flat params)
};

/// Per-example cross-entropy -log softmax(logits)[label].
std::vector<double> forward_loss(const ModelParams& params, const RowMatrix& features,
                                 std::span<const int> labels);

/// Per-example losses plus the gradient of (1/b) * sum_i w_i * loss_i.
///
/// With empty weights every w_i is 1 and the gradient is that of the plain
/// batch mean. mean_loss is always the unweighted mean.
BatchResult forward_backward(const ModelParams& params, const RowMatrix& features,
                             std::span<const int> labels, std::span<const double> weights = {});

struct Evaluation {
    double mean_loss = 0.0;
    double error_rate = 0.0;
};

/// Dataset-wide mean loss and top-1 error (ties go to the lowest class id).
Evaluation evaluate(const ModelParams& params, const Dataset& dataset, std::size_t eval_batch);

/// Binary checkpoint: "BSCK", activation, layer sizes, then the flat
/// parameters, all little-endian.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace batchsel
