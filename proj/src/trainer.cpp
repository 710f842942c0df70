#include "batchsel/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "batchsel/errors.hpp"

namespace batchsel {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::uint64_t kSamplerSeedMix = 0x9e3779b97f4a7c15ULL;

std::vector<std::size_t> layer_sizes_for(const RunConfig& config, const Dataset& data) {
    std::vector<std::size_t> sizes{data.dim()};
    sizes.insert(sizes.end(), config.hidden_layers.begin(), config.hidden_layers.end());
    sizes.push_back(static_cast<std::size_t>(data.num_classes()));
    return sizes;
}

RunConfig validated(RunConfig config) {
    config.validate();
    return config;
}

}  // namespace

void RunConfig::validate() const {
    if (epochs < 1) {
        throw ArgumentError("epochs must be at least 1");
    }
    if (!(recompute_ratio > 0.0 && recompute_ratio <= 1.0)) {
        throw ArgumentError("r_ratio must lie in (0, 1]");
    }
    if (!(recompute_frequency >= 0.0) || !std::isfinite(recompute_frequency)) {
        throw ArgumentError("r_freq must be non-negative");
    }
    if (recompute_batch < 1) {
        throw ArgumentError("recompute_batch must be at least 1");
    }
    if (sort_period && *sort_period < 0) {
        throw ArgumentError("T_s must be non-negative");
    }
    if (!(eval_every > 0.0)) {
        throw ArgumentError("eval_every must be positive");
    }
    if (eval_batch < 1) {
        throw ArgumentError("eval_batch must be at least 1");
    }
    if (importance_sampling && selection_mode != SelectionMode::ranked) {
        throw ArgumentError("importance_sampling requires selection_mode = ranked");
    }
    for (std::size_t width : hidden_layers) {
        if (width < 1) {
            throw ArgumentError("hidden layer sizes must be at least 1");
        }
    }
}

std::vector<double> importance_weights(std::span<const double> probabilities) {
    if (probabilities.empty()) {
        return {};
    }
    const double largest = *std::max_element(probabilities.begin(), probabilities.end());
    if (!(largest > 0.0)) {
        throw ConsistencyError("importance weights: batch probabilities must be positive");
    }
    std::vector<double> relative(probabilities.size());
    double total = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (!(probabilities[i] > 0.0)) {
            throw ConsistencyError("importance weights: zero selection probability");
        }
        relative[i] = probabilities[i] / largest;
        total += relative[i];
    }
    const double batch = static_cast<double>(probabilities.size());
    std::vector<double> weights(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        weights[i] = total / (batch * relative[i]);
    }
    return weights;
}

std::size_t compute_n_eff(std::span<const std::size_t> history, std::size_t n) {
    const std::size_t window = std::min(n, history.size());
    const auto recent = history.subspan(history.size() - window);
    if (recent.empty()) {
        return 0;
    }
    const std::size_t largest = *std::max_element(recent.begin(), recent.end());
    std::vector<bool> seen(largest + 1, false);
    std::size_t distinct = 0;
    for (std::size_t index : recent) {
        if (!seen[index]) {
            seen[index] = true;
            ++distinct;
        }
    }
    return distinct;
}

Trainer::Trainer(RunConfig config, const Dataset& train, const Dataset* validation)
    : config_(validated(std::move(config))),
      train_(train),
      validation_(validation != nullptr && !validation->empty() ? validation : nullptr),
      n_(train.size()),
      sort_period_(0),
      params_(init_params(layer_sizes_for(config_, train), config_.activation, config_.seed)),
      optimizer_(config_.optimizer, params_.size()),
      rng_(config_.seed ^ kSamplerSeedMix),
      table_(train.size()),
      shuffle_(train.size()) {
    if (n_ == 0) {
        throw ArgumentError("training set is empty");
    }
    if (config_.recompute_frequency > 0.0 &&
        config_.recompute_ratio * static_cast<double>(n_) < 1.0) {
        throw ArgumentError("r_ratio * N must be at least 1 when r_freq > 0");
    }
    sort_period_ = config_.sort_period.value_or(static_cast<std::int64_t>(n_ / 10));
    // First-call initialization: c_e = -N so the first call builds the
    // distribution.
    counters_.last_refresh = -static_cast<std::int64_t>(n_);
    pressure_ = config_.selection.pressure_at(0);
    history_.reserve(n_);
}

std::size_t Trainer::batch_size() const {
    return std::min(config_.batch.batch_size_at(epoch_), n_);
}

std::size_t Trainer::n_eff() const { return compute_n_eff(history_, n_); }

void Trainer::refresh_distribution() {
    pressure_ = config_.selection.pressure_at(epoch_);
    distribution_ = build_distribution(pressure_, n_);
}

void Trainer::recompute_losses() {
    const auto start = Clock::now();
    const std::size_t count = std::min(
        n_, static_cast<std::size_t>(std::ceil(config_.recompute_ratio * static_cast<double>(n_))));
    std::vector<std::size_t> chunk;
    for (std::size_t first = 0; first < count; first += config_.recompute_batch) {
        const std::size_t last = std::min(count, first + config_.recompute_batch);
        chunk.clear();
        for (std::size_t rank = first; rank < last; ++rank) {
            chunk.push_back(table_.at_rank(rank).index);
        }
        train_.gather(chunk, batch_features_, batch_labels_);
        const std::vector<double> losses = forward_loss(params_, batch_features_, batch_labels_);
        for (std::size_t k = 0; k < chunk.size(); ++k) {
            table_.update_loss(chunk[k], losses[k]);
        }
        stats_.recompute_forward_datapoints += chunk.size();
    }
    table_.sort();
    stats_.recompute_seconds += seconds_since(start);
}

std::vector<std::size_t> Trainer::draw(std::size_t batch, std::vector<std::size_t>& ranks) {
    std::vector<std::size_t> indices(batch);
    switch (config_.selection_mode) {
        case SelectionMode::random:
            for (auto& index : indices) {
                index = rng_.uniform_index(n_);
            }
            break;
        case SelectionMode::shuffle:
            for (auto& index : indices) {
                index = shuffle_.next(rng_);
            }
            break;
        case SelectionMode::ranked:
            ranks.resize(batch);
            for (std::size_t i = 0; i < batch; ++i) {
                indices[i] = select_datapoint(table_, distribution_, rng_, &ranks[i]);
            }
            break;
    }
    return indices;
}

BatchSelection Trainer::select_batch() {
    auto start = Clock::now();
    double excluded = 0.0;
    const bool ranked = config_.selection_mode == SelectionMode::ranked;
    const std::size_t call = ++stats_.calls;
    const std::size_t batch = batch_size();
    const auto n = static_cast<std::int64_t>(n_);

    counters_.evaluated += static_cast<std::int64_t>(batch);
    if (counters_.evaluated - counters_.last_refresh > n) {
        counters_.last_refresh = counters_.evaluated;
        epoch_ = static_cast<int>(counters_.last_refresh / n);
        events_.push_back({call, TriggerKind::refresh});
        if (ranked) {
            refresh_distribution();
        }
    }
    if (ranked) {
        if (maybe_sort(table_, counters_, sort_period_)) {
            events_.push_back({call, TriggerKind::sort});
        }
        if (config_.recompute_frequency > 0.0 &&
            static_cast<double>(counters_.evaluated - counters_.last_recompute) >
                static_cast<double>(n_) / config_.recompute_frequency) {
            counters_.last_recompute = counters_.evaluated;
            events_.push_back({call, TriggerKind::recompute});
            const double before = stats_.recompute_seconds;
            recompute_losses();
            excluded += stats_.recompute_seconds - before;
        }
    }

    BatchSelection selection;
    selection.indices = draw(batch, selection.ranks);
    if (ranked && config_.importance_sampling) {
        std::vector<double> probabilities(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            probabilities[i] = distribution_.probabilities[selection.ranks[i]];
        }
        selection.weights = importance_weights(probabilities);
    }
    train_.gather(selection.indices, batch_features_, batch_labels_);

    const auto gradient_start = Clock::now();
    selection.result = forward_backward(params_, batch_features_, batch_labels_, selection.weights);
    const double gradient_time = seconds_since(gradient_start);
    stats_.gradient_seconds += gradient_time;
    excluded += gradient_time;
    stats_.batch_forward_datapoints += batch;

    if (ranked) {
        for (std::size_t i = 0; i < batch; ++i) {
            table_.update_loss(selection.indices[i], selection.result.per_example_losses[i]);
        }
    }
    for (std::size_t index : selection.indices) {
        if (history_.size() < n_) {
            history_.push_back(index);
        } else {
            history_[history_head_] = index;
            history_head_ = (history_head_ + 1) % n_;
        }
    }
    stats_.selection_seconds += seconds_since(start) - excluded;
    return selection;
}

BatchSelection Trainer::step() {
    const auto start = Clock::now();
    BatchSelection selection = select_batch();
    const auto optimizer_start = Clock::now();
    optimizer_.step(params_.flat(), selection.result.gradient);
    stats_.optimizer_seconds += seconds_since(optimizer_start);
    wall_seconds_ += seconds_since(start);
    return selection;
}

MetricsRow Trainer::measure() {
    MetricsRow row;
    row.epoch = static_cast<double>(counters_.evaluated) / static_cast<double>(n_);
    row.wall_seconds = wall_seconds_;
    const Evaluation train_eval = evaluate(params_, train_, config_.eval_batch);
    row.train_loss = train_eval.mean_loss;
    row.train_error = train_eval.error_rate;
    if (validation_ != nullptr) {
        const Evaluation val_eval = evaluate(params_, *validation_, config_.eval_batch);
        row.val_loss = val_eval.mean_loss;
        row.val_error = val_eval.error_rate;
    } else {
        row.val_loss = std::numeric_limits<double>::quiet_NaN();
        row.val_error = std::numeric_limits<double>::quiet_NaN();
    }
    row.n_eff = n_eff();
    row.pressure = config_.selection_mode == SelectionMode::ranked ? pressure_ : 1.0;
    row.batch_size = batch_size();
    return row;
}

MetricsLog Trainer::train() {
    MetricsLog log;
    const auto target = static_cast<std::int64_t>(config_.epochs) * static_cast<std::int64_t>(n_);
    const double eval_stride = config_.eval_every * static_cast<double>(n_);
    double next_eval = eval_stride;
    log.rows.push_back(measure());
    std::int64_t last_recorded = counters_.evaluated;
    while (counters_.evaluated < target) {
        step();
        const auto evaluated = static_cast<double>(counters_.evaluated);
        if (evaluated >= next_eval) {
            log.rows.push_back(measure());
            last_recorded = counters_.evaluated;
            while (next_eval <= evaluated) {
                next_eval += eval_stride;
            }
        }
    }
    if (last_recorded != counters_.evaluated) {
        log.rows.push_back(measure());
    }
    return log;
}

MetricsLog train(const RunConfig& config, const DataSplit& split) {
    Trainer trainer(config, split.train, &split.validation);
    return trainer.train();
}

}  // namespace batchsel
