#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "batchsel/dataset.hpp"
#include "batchsel/errors.hpp"
#include "batchsel/trainer.hpp"

namespace batchsel {

struct SyntheticParams {
    std::size_t n = 2000;
    std::size_t d = 20;
    int c = 10;
    double spread = 0.15;
    std::uint64_t seed = 1;
};

enum class DataKind { synthetic, mnist };

struct DataSource {
    DataKind kind = DataKind::synthetic;
    std::string mnist_dir;
    SyntheticParams synthetic;
    /// Rows used for training; nullopt takes everything not in validation.
    std::optional<std::size_t> n_train;
    /// Validation rows following the training rows; nullopt means 10000
    /// for MNIST and a fifth of the rows for synthetic data.
    std::optional<std::size_t> n_val;
};

struct NamedRun {
    std::string name;
    RunConfig config;
};

struct ExperimentSpec {
    std::vector<NamedRun> runs;
    DataSource data;
    std::string out_dir = "results";
    int repeats = 1;
    std::uint64_t seed = 1;
};

/// Rejected configuration; problems() lists every offending line or field.
class ConfigError : public ArgumentError {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// Parses the line-oriented experiment format:
///
///     # comment
///     key = value          (before any section: experiment settings and
///                           defaults shared by every run)
///     [run <name>]
///     key = value          (per-run settings)
///
/// Unknown keys, malformed lines and invalid values raise ConfigError.
ExperimentSpec parse_config(const std::string& path);
ExperimentSpec parse_config_text(const std::string& text);

/// Overrides synthetic parameters from "n=...,d=...,c=...,spread=...,seed=...".
void apply_synthetic_overrides(DataSource& source, const std::string& overrides);

/// Loads (or generates) the data and splits it into train/validation/test.
/// For MNIST the test part comes from the t10k files when they exist.
DataSplit load_data(const DataSource& source);

inline constexpr const char* kCsvHeader =
    "epoch,wall_seconds,train_loss,train_error,val_loss,val_error,n_eff,s_e,b_e";

/// CSV text for a metrics log: fixed header, 9 significant digits.
std::string format_csv(const MetricsLog& log);

/// Per-row medians across repeats (rows matched by position).
MetricsLog median_log(const std::vector<MetricsLog>& logs);

/// Writes to a temporary file in the same directory, then renames it.
void write_file_atomic(const std::string& path, const std::string& contents);

/// Runs every (run, repeat) pair, writing <run>_seed<k>.csv per repeat and
/// <run>_median.csv per run into spec.out_dir. Repeats run on up to
/// BATCHSEL_THREADS threads. Returns 0 when every run completed.
int run_experiment(const ExperimentSpec& spec, std::ostream& log);

}  // namespace batchsel
