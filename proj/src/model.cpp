#include "batchsel/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "batchsel/errors.hpp"
#include "batchsel/rng.hpp"

namespace batchsel {

ModelParams::ModelParams(std::vector<std::size_t> layer_sizes, Activation activation)
    : layer_sizes_(std::move(layer_sizes)), activation_(activation) {
    if (layer_sizes_.size() < 2) {
        throw ArgumentError("model needs at least an input and an output layer size");
    }
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
        if (layer_sizes_[l] < 1 || layer_sizes_[l + 1] < 1) {
            throw ArgumentError("layer sizes must be at least 1");
        }
        offsets_.push_back(total);
        total += layer_sizes_[l] * layer_sizes_[l + 1] + layer_sizes_[l + 1];
    }
    values_.assign(total, 0.0);
}

void ModelParams::unflatten(std::span<const double> values) {
    if (values.size() != values_.size()) {
        throw ArgumentError("unflatten: expected " + std::to_string(values_.size()) +
                            " values, got " + std::to_string(values.size()));
    }
    std::copy(values.begin(), values.end(), values_.begin());
}

ModelParams::WeightMap ModelParams::weights(std::size_t layer) {
    return WeightMap(values_.data() + weight_offset(layer),
                     static_cast<Eigen::Index>(layer_sizes_[layer]),
                     static_cast<Eigen::Index>(layer_sizes_[layer + 1]));
}

ModelParams::ConstWeightMap ModelParams::weights(std::size_t layer) const {
    return ConstWeightMap(values_.data() + weight_offset(layer),
                          static_cast<Eigen::Index>(layer_sizes_[layer]),
                          static_cast<Eigen::Index>(layer_sizes_[layer + 1]));
}

ModelParams::BiasMap ModelParams::bias(std::size_t layer) {
    return BiasMap(values_.data() + bias_offset(layer),
                   static_cast<Eigen::Index>(layer_sizes_[layer + 1]));
}

ModelParams::ConstBiasMap ModelParams::bias(std::size_t layer) const {
    return ConstBiasMap(values_.data() + bias_offset(layer),
                        static_cast<Eigen::Index>(layer_sizes_[layer + 1]));
}

ModelParams init_params(const std::vector<std::size_t>& layer_sizes, Activation activation,
                        std::uint64_t seed) {
    ModelParams params(layer_sizes, activation);
    Rng rng(seed);
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const double fan_in = static_cast<double>(layer_sizes[l]);
        const double fan_out = static_cast<double>(layer_sizes[l + 1]);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        auto w = params.weights(l);
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                w(i, j) = rng.uniform(-limit, limit);
            }
        }
    }
    return params;
}

namespace {

void check_batch(const ModelParams& params, const RowMatrix& features,
                 std::span<const int> labels) {
    if (static_cast<std::size_t>(features.cols()) != params.input_dim()) {
        throw ArgumentError("feature dimension " + std::to_string(features.cols()) +
                            " does not match model input " + std::to_string(params.input_dim()));
    }
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw ArgumentError("feature rows and label count differ");
    }
    const int classes = static_cast<int>(params.num_classes());
    for (int label : labels) {
        if (label < 0 || label >= classes) {
            throw ArgumentError("label " + std::to_string(label) + " outside model classes");
        }
    }
}

// Hidden-layer outputs (post-activation) followed by the logits.
std::vector<RowMatrix> forward_layers(const ModelParams& params, const RowMatrix& features) {
    std::vector<RowMatrix> outputs;
    outputs.reserve(params.num_layers());
    const RowMatrix* input = &features;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        RowMatrix z = (*input) * params.weights(l);
        z.rowwise() += params.bias(l);
        if (l + 1 < params.num_layers()) {
            if (params.activation() == Activation::relu) {
                z = z.cwiseMax(0.0);
            } else {
                z = z.array().tanh().matrix();
            }
        }
        outputs.push_back(std::move(z));
        input = &outputs.back();
    }
    return outputs;
}

// Converts logits to softmax probabilities in place and returns the
// per-example cross-entropy of the given labels.
std::vector<double> softmax_cross_entropy(RowMatrix& logits, std::span<const int> labels) {
    std::vector<double> losses(labels.size());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        auto row = logits.row(i);
        const double shift = row.maxCoeff();
        const double label_logit = row(labels[static_cast<std::size_t>(i)]);
        row.array() = (row.array() - shift).exp();
        const double total = row.sum();
        losses[static_cast<std::size_t>(i)] = std::log(total) + shift - label_logit;
        row /= total;
    }
    return losses;
}

}  // namespace

std::vector<double> forward_loss(const ModelParams& params, const RowMatrix& features,
                                 std::span<const int> labels) {
    check_batch(params, features, labels);
    std::vector<RowMatrix> outputs = forward_layers(params, features);
    return softmax_cross_entropy(outputs.back(), labels);
}

BatchResult forward_backward(const ModelParams& params, const RowMatrix& features,
                             std::span<const int> labels, std::span<const double> weights) {
    check_batch(params, features, labels);
    const std::size_t batch = labels.size();
    if (batch == 0) {
        throw ArgumentError("forward_backward: empty batch");
    }
    if (!weights.empty() && weights.size() != batch) {
        throw ArgumentError("forward_backward: weight count differs from batch size");
    }

    std::vector<RowMatrix> outputs = forward_layers(params, features);
    BatchResult result;
    result.per_example_losses = softmax_cross_entropy(outputs.back(), labels);
    double total = 0.0;
    for (double loss : result.per_example_losses) {
        total += loss;
    }
    result.mean_loss = total / static_cast<double>(batch);

    // d loss_i / d logits = softmax - onehot, scaled by w_i / b.
    RowMatrix delta = std::move(outputs.back());
    for (std::size_t i = 0; i < batch; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        delta(row, labels[i]) -= 1.0;
        const double scale = weights.empty() ? 1.0 : weights[i];
        delta.row(row) *= scale / static_cast<double>(batch);
    }

    result.gradient.assign(params.size(), 0.0);
    for (std::size_t l = params.num_layers(); l-- > 0;) {
        const RowMatrix& input = l == 0 ? features : outputs[l - 1];
        Eigen::Map<RowMatrix> grad_w(result.gradient.data() + params.weight_offset(l),
                                     static_cast<Eigen::Index>(params.layer_sizes()[l]),
                                     static_cast<Eigen::Index>(params.layer_sizes()[l + 1]));
        Eigen::Map<Eigen::RowVectorXd> grad_b(result.gradient.data() + params.bias_offset(l),
                                              static_cast<Eigen::Index>(params.layer_sizes()[l + 1]));
        grad_w.noalias() = input.transpose() * delta;
        grad_b = delta.colwise().sum();
        if (l == 0) {
            break;
        }
        RowMatrix upstream = delta * params.weights(l).transpose();
        const RowMatrix& hidden = outputs[l - 1];
        if (params.activation() == Activation::relu) {
            upstream.array() *= (hidden.array() > 0.0).cast<double>();
        } else {
            upstream.array() *= 1.0 - hidden.array().square();
        }
        delta = std::move(upstream);
    }
    return result;
}

Evaluation evaluate(const ModelParams& params, const Dataset& dataset, std::size_t eval_batch) {
    if (eval_batch < 1) {
        throw ArgumentError("evaluate: eval_batch must be at least 1");
    }
    if (dataset.empty()) {
        throw ArgumentError("evaluate: empty dataset");
    }
    const std::size_t n = dataset.size();
    double loss_total = 0.0;
    std::size_t errors = 0;
    for (std::size_t first = 0; first < n; first += eval_batch) {
        const std::size_t count = std::min(eval_batch, n - first);
        const RowMatrix chunk = dataset.features().middleRows(static_cast<Eigen::Index>(first),
                                                              static_cast<Eigen::Index>(count));
        const std::span<const int> labels(dataset.labels().data() + first, count);
        check_batch(params, chunk, labels);
        std::vector<RowMatrix> outputs = forward_layers(params, chunk);
        RowMatrix& logits = outputs.back();
        for (std::size_t i = 0; i < count; ++i) {
            Eigen::Index predicted = 0;
            logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&predicted);
            if (predicted != labels[i]) {
                ++errors;
            }
        }
        // Summed one example at a time in dataset order, so chunking does
        // not change the accumulation order.
        for (double loss : softmax_cross_entropy(logits, labels)) {
            loss_total += loss;
        }
    }
    return Evaluation{loss_total / static_cast<double>(n),
                      static_cast<double>(errors) / static_cast<double>(n)};
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t value) {
    for (int shift = 0; shift < 32; shift += 8) {
        out.put(static_cast<char>((value >> shift) & 0xff));
    }
}

void put_u64(std::ofstream& out, std::uint64_t value) {
    for (int shift = 0; shift < 64; shift += 8) {
        out.put(static_cast<char>((value >> shift) & 0xff));
    }
}

std::uint64_t get_bytes(std::ifstream& in, int width, const std::string& path) {
    std::uint64_t value = 0;
    for (int k = 0; k < width; ++k) {
        const int byte = in.get();
        if (byte == std::char_traits<char>::eof()) {
            throw IoError(path + ": truncated checkpoint");
        }
        value |= static_cast<std::uint64_t>(byte & 0xff) << (8 * k);
    }
    return value;
}

constexpr char kCheckpointMagic[4] = {'B', 'S', 'C', 'K'};

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    out.write(kCheckpointMagic, 4);
    put_u32(out, params.activation() == Activation::relu ? 0 : 1);
    put_u32(out, static_cast<std::uint32_t>(params.layer_sizes().size()));
    for (std::size_t size : params.layer_sizes()) {
        put_u64(out, size);
    }
    for (double value : params.flat()) {
        put_u64(out, std::bit_cast<std::uint64_t>(value));
    }
    if (!out) {
        throw IoError("failed writing " + path);
    }
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw FormatError(path + ": not a checkpoint file");
    }
    const auto activation_id = get_bytes(in, 4, path);
    if (activation_id > 1) {
        throw FormatError(path + ": unknown activation id");
    }
    const auto count = get_bytes(in, 4, path);
    std::vector<std::size_t> sizes(count);
    for (auto& size : sizes) {
        size = static_cast<std::size_t>(get_bytes(in, 8, path));
    }
    ModelParams params(sizes, activation_id == 0 ? Activation::relu : Activation::tanh);
    for (double& value : params.flat()) {
        value = std::bit_cast<double>(get_bytes(in, 8, path));
    }
    return params;
}

}  // namespace batchsel
