#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "batchsel/rng.hpp"

namespace batchsel {

// ---------------------------------------------------------------------------
// Selection pressure schedule
// ---------------------------------------------------------------------------

enum class PressureMode { fixed, exponential };

/// Ratio between the selection probabilities of the top- and bottom-ranked
/// datapoints, as a function of the epoch index.
///
/// In exponential mode the pressure moves geometrically from start_pressure
/// at start_epoch to end_pressure at end_epoch and is held constant outside
/// that window.
class SelectionSchedule {
public:
    /// Constant pressure.
    explicit SelectionSchedule(double pressure = 1.0);
    SelectionSchedule(double start_pressure, double end_pressure, int start_epoch, int end_epoch);

    double pressure_at(int epoch) const;

    PressureMode mode() const { return mode_; }
    double start_pressure() const { return start_pressure_; }
    double end_pressure() const { return end_pressure_; }
    int start_epoch() const { return start_epoch_; }
    int end_epoch() const { return end_epoch_; }

private:
    PressureMode mode_;
    double start_pressure_;
    double end_pressure_;
    int start_epoch_ = 0;
    int end_epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Rank distribution
// ---------------------------------------------------------------------------

/// Selection probabilities by rank (rank 0 = highest latest known loss).
///
/// Adjacent ranks differ by the constant factor exp(log(s)/n), so the
/// probabilities decay exponentially with rank.
struct SelectionDistribution {
    std::vector<double> probabilities;
    std::vector<double> cumulative;  // cumulative.back() == 1.0 exactly
    double pressure = 1.0;

    std::size_t size() const { return probabilities.size(); }
};

SelectionDistribution build_distribution(double pressure, std::size_t n);

/// Smallest rank i with r < cumulative[i], found by bisection.
///
/// When comparisons is non-null it is incremented once per probe of the
/// cumulative array (at most ceil(log2 n) + 1).
std::size_t sample_rank(std::span<const double> cumulative, double r,
                        std::size_t* comparisons = nullptr);

// ---------------------------------------------------------------------------
// Loss rank table
// ---------------------------------------------------------------------------

struct RankEntry {
    double loss;
    std::size_t index;
};

/// Datapoints ordered by their latest known loss.
///
/// Entries start with loss = +infinity in index order. update_loss writes in
/// place and may leave the order stale until the next sort(). Sorting is
/// descending by loss with ties broken by ascending datapoint index; NaN
/// losses rank like +infinity.
class LossRankTable {
public:
    explicit LossRankTable(std::size_t n = 0);

    std::size_t size() const { return entries_.size(); }
    const std::vector<RankEntry>& entries() const { return entries_; }
    const RankEntry& at_rank(std::size_t rank) const { return entries_.at(rank); }

    /// Current slot of a datapoint (its rank as of the last sort).
    std::size_t rank_of(std::size_t datapoint) const;
    double loss_of(std::size_t datapoint) const { return entries_[rank_of(datapoint)].loss; }

    void update_loss(std::size_t datapoint, double loss);
    void sort();

    /// True when no update has happened since the last sort.
    bool is_sorted() const { return sorted_; }

private:
    std::vector<RankEntry> entries_;
    std::vector<std::size_t> slot_of_;
    bool sorted_ = true;
};

/// Evaluated-datapoint counters that drive the periodic work.
struct SamplerCounters {
    std::int64_t evaluated = 0;        // c
    std::int64_t last_refresh = 0;     // c_e
    std::int64_t last_sort = 0;        // c_s
    std::int64_t last_recompute = 0;   // c_r
};

/// Sorts when more than sort_period datapoints were evaluated since the
/// last sort, then moves the sort checkpoint to the current count.
bool maybe_sort(LossRankTable& table, SamplerCounters& counters, std::int64_t sort_period);

/// Returns the datapoint stored at the rank selected by r in [0, 1).
/// The sampled rank is written to rank_out when non-null.
std::size_t select_datapoint(const LossRankTable& table, const SelectionDistribution& dist,
                             double r, std::size_t* rank_out = nullptr);

/// Same, with r drawn from rng.
std::size_t select_datapoint(const LossRankTable& table, const SelectionDistribution& dist,
                             Rng& rng, std::size_t* rank_out = nullptr);

// ---------------------------------------------------------------------------
// Uniform baselines
// ---------------------------------------------------------------------------

/// Uniform sampling without replacement: every index is returned once per
/// pass, the pool is reshuffled when exhausted.
class ShufflePool {
public:
    explicit ShufflePool(std::size_t n = 0) : order_(n), cursor_(n) {
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    }

    std::size_t next(Rng& rng);
    std::size_t remaining() const { return order_.size() - cursor_; }

private:
    std::vector<std::size_t> order_;
    std::size_t cursor_;
};

// ---------------------------------------------------------------------------
// Batch size schedule
// ---------------------------------------------------------------------------

enum class BatchMode { constant, exponential, linear };

class BatchSchedule {
public:
    explicit BatchSchedule(std::size_t batch_size = 1);
    BatchSchedule(BatchMode mode, std::size_t start_size, std::size_t end_size, int start_epoch,
                  int end_epoch);

    /// Batch size for an epoch, rounded half-to-even and at least 1.
    std::size_t batch_size_at(int epoch) const;

    BatchMode mode() const { return mode_; }
    std::size_t start_size() const { return start_size_; }
    std::size_t end_size() const { return end_size_; }

private:
    BatchMode mode_;
    std::size_t start_size_;
    std::size_t end_size_;
    int start_epoch_ = 0;
    int end_epoch_ = 0;
};

inline constexpr std::int64_t kNeverSort = std::numeric_limits<std::int64_t>::max();

}  // namespace batchsel
