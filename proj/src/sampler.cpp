#include "batchsel/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "batchsel/errors.hpp"

namespace batchsel {

SelectionSchedule::SelectionSchedule(double pressure)
    : mode_(PressureMode::fixed), start_pressure_(pressure), end_pressure_(pressure) {
    if (!(pressure > 0.0) || !std::isfinite(pressure)) {
        throw ArgumentError("selection pressure must be positive and finite");
    }
}

SelectionSchedule::SelectionSchedule(double start_pressure, double end_pressure, int start_epoch,
                                     int end_epoch)
    : mode_(PressureMode::exponential),
      start_pressure_(start_pressure),
      end_pressure_(end_pressure),
      start_epoch_(start_epoch),
      end_epoch_(end_epoch) {
    if (!(start_pressure > 0.0) || !(end_pressure > 0.0) || !std::isfinite(start_pressure) ||
        !std::isfinite(end_pressure)) {
        throw ArgumentError("selection pressures must be positive and finite");
    }
    if (start_epoch < 0 || end_epoch <= start_epoch) {
        throw ArgumentError("pressure schedule needs 0 <= e0 < e_end");
    }
}

double SelectionSchedule::pressure_at(int epoch) const {
    if (mode_ == PressureMode::fixed || epoch <= start_epoch_) {
        return start_pressure_;
    }
    if (epoch >= end_epoch_) {
        return end_pressure_;
    }
    const double fraction =
        static_cast<double>(epoch - start_epoch_) / static_cast<double>(end_epoch_ - start_epoch_);
    return start_pressure_ * std::pow(end_pressure_ / start_pressure_, fraction);
}

SelectionDistribution build_distribution(double pressure, std::size_t n) {
    if (!(pressure > 0.0) || !std::isfinite(pressure)) {
        throw ArgumentError("build_distribution: pressure must be positive and finite");
    }
    if (n == 0) {
        throw ArgumentError("build_distribution: n must be positive");
    }
    SelectionDistribution dist;
    dist.pressure = pressure;
    dist.probabilities.resize(n);
    dist.cumulative.resize(n);

    // p_i is proportional to q^i with q = 1/exp(log(s)/n); the common factor
    // q cancels in the normalization, so rank 0 gets weight 1.
    const double log_step = std::log(pressure) / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dist.probabilities[i] = std::exp(-log_step * static_cast<double>(i));
        total += dist.probabilities[i];
    }
    double running = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dist.probabilities[i] /= total;
        running += dist.probabilities[i];
        dist.cumulative[i] = running;
    }
    // Every r in [0, 1) must land on some rank.
    dist.cumulative.back() = 1.0;
    return dist;
}

std::size_t sample_rank(std::span<const double> cumulative, double r, std::size_t* comparisons) {
    if (!(r >= 0.0 && r < 1.0)) {
        throw ArgumentError("sample_rank: r must lie in [0, 1)");
    }
    if (cumulative.empty()) {
        throw ArgumentError("sample_rank: empty distribution");
    }
    std::size_t lo = 0;
    std::size_t hi = cumulative.size() - 1;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (comparisons != nullptr) {
            ++*comparisons;
        }
        if (r < cumulative[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return lo;
}

LossRankTable::LossRankTable(std::size_t n) : entries_(n), slot_of_(n) {
    for (std::size_t i = 0; i < n; ++i) {
        entries_[i] = RankEntry{std::numeric_limits<double>::infinity(), i};
        slot_of_[i] = i;
    }
}

std::size_t LossRankTable::rank_of(std::size_t datapoint) const {
    if (datapoint >= slot_of_.size()) {
        throw ConsistencyError("unknown datapoint index " + std::to_string(datapoint));
    }
    return slot_of_[datapoint];
}

void LossRankTable::update_loss(std::size_t datapoint, double loss) {
    entries_[rank_of(datapoint)].loss = loss;
    sorted_ = false;
}

void LossRankTable::sort() {
    const auto key = [](double loss) {
        return std::isnan(loss) ? std::numeric_limits<double>::infinity() : loss;
    };
    std::sort(entries_.begin(), entries_.end(), [&](const RankEntry& a, const RankEntry& b) {
        const double ka = key(a.loss);
        const double kb = key(b.loss);
        if (ka != kb) {
            return ka > kb;
        }
        return a.index < b.index;
    });
    for (std::size_t slot = 0; slot < entries_.size(); ++slot) {
        slot_of_[entries_[slot].index] = slot;
    }
    sorted_ = true;
}

bool maybe_sort(LossRankTable& table, SamplerCounters& counters, std::int64_t sort_period) {
    if (counters.evaluated - counters.last_sort > sort_period) {
        counters.last_sort = counters.evaluated;
        table.sort();
        return true;
    }
    return false;
}

std::size_t select_datapoint(const LossRankTable& table, const SelectionDistribution& dist,
                             Rng& rng, std::size_t* rank_out) {
    return select_datapoint(table, dist, rng.uniform(), rank_out);
}

std::size_t select_datapoint(const LossRankTable& table, const SelectionDistribution& dist,
                             double r, std::size_t* rank_out) {
    if (dist.size() != table.size()) {
        throw ConsistencyError("distribution size differs from rank table size");
    }
    const std::size_t rank = sample_rank(dist.cumulative, r);
    if (rank_out != nullptr) {
        *rank_out = rank;
    }
    return table.at_rank(rank).index;
}

std::size_t ShufflePool::next(Rng& rng) {
    if (order_.empty()) {
        throw ArgumentError("shuffle pool is empty");
    }
    if (cursor_ == order_.size()) {
        rng.shuffle(std::span<std::size_t>(order_));
        cursor_ = 0;
    }
    return order_[cursor_++];
}

BatchSchedule::BatchSchedule(std::size_t batch_size)
    : mode_(BatchMode::constant), start_size_(batch_size), end_size_(batch_size) {
    if (batch_size < 1) {
        throw ArgumentError("batch size must be at least 1");
    }
}

BatchSchedule::BatchSchedule(BatchMode mode, std::size_t start_size, std::size_t end_size,
                             int start_epoch, int end_epoch)
    : mode_(mode),
      start_size_(start_size),
      end_size_(mode == BatchMode::constant ? start_size : end_size),
      start_epoch_(start_epoch),
      end_epoch_(end_epoch) {
    if (start_size < 1 || end_size_ < 1) {
        throw ArgumentError("batch sizes must be at least 1");
    }
    if (mode != BatchMode::constant && (start_epoch < 0 || end_epoch <= start_epoch)) {
        throw ArgumentError("batch schedule needs 0 <= e0 < e_end");
    }
}

std::size_t BatchSchedule::batch_size_at(int epoch) const {
    if (mode_ == BatchMode::constant || epoch <= start_epoch_) {
        return start_size_;
    }
    if (epoch >= end_epoch_) {
        return end_size_;
    }
    const double b0 = static_cast<double>(start_size_);
    const double b1 = static_cast<double>(end_size_);
    double size;
    if (mode_ == BatchMode::exponential) {
        const double fraction = static_cast<double>(epoch - start_epoch_) /
                                static_cast<double>(end_epoch_ - start_epoch_);
        size = b0 * std::pow(b1 / b0, fraction);
    } else {
        // The linear ramp divides by e_end, not by (e_end - e0).
        size = b0 + (b1 - b0) * static_cast<double>(epoch - start_epoch_) /
                        static_cast<double>(end_epoch_);
    }
    const double rounded = std::nearbyint(size);
    return rounded < 1.0 ? std::size_t{1} : static_cast<std::size_t>(rounded);
}

}  // namespace batchsel
