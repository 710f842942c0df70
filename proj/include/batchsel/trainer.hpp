#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "batchsel/dataset.hpp"
#include "batchsel/model.hpp"
#include "batchsel/optim.hpp"
#include "batchsel/rng.hpp"
#include "batchsel/sampler.hpp"

namespace batchsel {

enum class SelectionMode { random, shuffle, ranked };

struct RunConfig {
    SelectionMode selection_mode = SelectionMode::shuffle;
    SelectionSchedule selection{1.0};
    BatchSchedule batch{64};
    /// T_s in evaluated datapoints; nullopt means N/10.
    std::optional<std::int64_t> sort_period;
    double recompute_frequency = 0.0;  // r_freq, recomputations per epoch
    double recompute_ratio = 1.0;      // r_ratio, fraction of N recomputed
    std::size_t recompute_batch = 1024;
    OptimizerConfig optimizer;
    std::vector<std::size_t> hidden_layers{128};
    Activation activation = Activation::relu;
    int epochs = 1;
    std::uint64_t seed = 1;
    bool importance_sampling = false;
    double eval_every = 1.0;  // epochs between metric rows
    std::size_t eval_batch = 1024;

    /// Throws ArgumentError naming the first invalid field.
    void validate() const;
};

struct MetricsRow {
    double epoch = 0.0;  // evaluated datapoints / N
    double wall_seconds = 0.0;
    double train_loss = 0.0;
    double train_error = 0.0;
    double val_loss = 0.0;  // NaN without a validation set
    double val_error = 0.0;
    std::size_t n_eff = 0;
    double pressure = 1.0;
    std::size_t batch_size = 0;
};

struct MetricsLog {
    std::vector<MetricsRow> rows;
};

enum class TriggerKind { refresh, sort, recompute };

/// One firing of a periodic action, tagged with the 1-based select_batch call.
struct TriggerEvent {
    std::size_t call;
    TriggerKind kind;
    bool operator==(const TriggerEvent&) const = default;
};

struct TrainerStats {
    std::size_t calls = 0;
    std::size_t batch_forward_datapoints = 0;
    std::size_t recompute_forward_datapoints = 0;
    double selection_seconds = 0.0;  // bookkeeping, sorting, sampling, write-back
    double recompute_seconds = 0.0;
    double gradient_seconds = 0.0;  // forward/backward on the batch
    double optimizer_seconds = 0.0;
};

struct BatchSelection {
    std::vector<std::size_t> indices;
    std::vector<std::size_t> ranks;  // ranked mode only
    std::vector<double> weights;     // importance weights, when enabled
    BatchResult result;
};

/// Importance weights 1/(b q_i) with q_i = p_i / sum_k p_k over the batch.
///
/// Probabilities are first scaled by their maximum so that equal inputs give
/// weights of exactly 1.0.
std::vector<double> importance_weights(std::span<const double> probabilities);

/// Distinct datapoints among the last min(n, history.size()) selections.
std::size_t compute_n_eff(std::span<const std::size_t> history, std::size_t n);

/// Online batch selection driving one model and optimizer.
///
/// select_batch() advances the
/// evaluated-datapoint counter, refreshes the rank distribution once per
/// epoch, sorts every T_s datapoints, recomputes the losses of the top
/// r_ratio * N ranks r_freq times per epoch, draws the batch, and writes the
/// batch losses back into the rank table. Uniform modes skip the rank work.
class Trainer {
public:
    Trainer(RunConfig config, const Dataset& train, const Dataset* validation = nullptr);

    BatchSelection select_batch();

    /// select_batch() followed by one optimizer step.
    BatchSelection step();

    /// Runs to config.epochs * N evaluated datapoints, recording a metrics
    /// row at the start and every eval_every epochs.
    MetricsLog train();

    MetricsRow measure();

    const RunConfig& config() const { return config_; }
    const ModelParams& params() const { return params_; }
    ModelParams& params() { return params_; }
    const LossRankTable& table() const { return table_; }
    const SamplerCounters& counters() const { return counters_; }
    const SelectionDistribution& distribution() const { return distribution_; }
    const std::vector<TriggerEvent>& events() const { return events_; }
    const TrainerStats& stats() const { return stats_; }
    std::int64_t sort_period() const { return sort_period_; }
    int epoch() const { return epoch_; }
    double pressure() const { return pressure_; }
    std::size_t batch_size() const;
    std::size_t n_eff() const;
    double wall_seconds() const { return wall_seconds_; }

private:
    void refresh_distribution();
    void recompute_losses();
    std::vector<std::size_t> draw(std::size_t batch, std::vector<std::size_t>& ranks);

    RunConfig config_;
    const Dataset& train_;
    const Dataset* validation_;
    std::size_t n_;
    std::int64_t sort_period_;
    ModelParams params_;
    Optimizer optimizer_;
    Rng rng_;
    LossRankTable table_;
    SamplerCounters counters_;
    SelectionDistribution distribution_;
    ShufflePool shuffle_;
    int epoch_ = 0;
    double pressure_ = 1.0;
    std::vector<std::size_t> history_;  // ring buffer of the last N selections
    std::size_t history_head_ = 0;
    std::vector<TriggerEvent> events_;
    TrainerStats stats_;
    double wall_seconds_ = 0.0;
    RowMatrix batch_features_;
    std::vector<int> batch_labels_;
};

/// Convenience wrapper: builds a Trainer on split.train/split.validation
/// and runs it.
MetricsLog train(const RunConfig& config, const DataSplit& split);

}  // namespace batchsel
