// Acceptance checks: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "batchsel/experiment.hpp"
#include "batchsel/optim.hpp"
#include "batchsel/sampler.hpp"
#include "batchsel/trainer.hpp"
#include "csv_compare.hpp"
#include "gradient_check.hpp"
#include "optim_oracle.hpp"
#include "test_helpers.hpp"
#include "trigger_oracle.hpp"

using namespace batchsel;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, format, value);
    return buffer;
}

double chi2_upper_tail(const std::vector<double>& counts, const std::vector<double>& expected) {
    double chi2 = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        chi2 += (counts[i] - expected[i]) * (counts[i] - expected[i]) / expected[i];
    }
    const boost::math::chi_squared reference(static_cast<double>(counts.size() - 1));
    return boost::math::cdf(boost::math::complement(reference, chi2));
}

double worst_relative_error(const std::vector<double>& counts, const std::vector<double>& probabilities,
                            double draws) {
    double worst = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double expected = probabilities[i] * draws;
        if (expected >= 500.0) worst = std::max(worst, std::abs(counts[i] - expected) / expected);
    }
    return worst;
}

Outcome sampler_conformance() {
    const auto start = Clock::now();
    const std::size_t n = 1000, draws = 1000000;
    const SelectionDistribution dist = build_distribution(1e2, n);
    Rng rng(2024);
    std::vector<double> counts(n, 0.0);
    for (std::size_t k = 0; k < draws; ++k) counts[sample_rank(dist.cumulative, rng.uniform())] += 1.0;
    const double worst = worst_relative_error(counts, dist.probabilities, static_cast<double>(draws));

    // The same statistic for an independent exact sampler, showing the
    // sampling noise floor at this draw count.
    std::mt19937_64 engine(91);
    std::discrete_distribution<std::size_t> exact(dist.probabilities.begin(), dist.probabilities.end());
    std::vector<double> control(n, 0.0);
    for (std::size_t k = 0; k < draws; ++k) control[exact(engine)] += 1.0;
    const double control_worst = worst_relative_error(control, dist.probabilities, static_cast<double>(draws));

    std::vector<double> expected(n);
    for (std::size_t i = 0; i < n; ++i) expected[i] = dist.probabilities[i] * static_cast<double>(draws);
    const double fit_p = chi2_upper_tail(counts, expected);

    const SelectionDistribution uniform = build_distribution(1.0, n);
    std::vector<double> uniform_counts(n, 0.0);
    for (std::size_t k = 0; k < draws; ++k) uniform_counts[sample_rank(uniform.cumulative, rng.uniform())] += 1.0;
    const double uniform_p =
        chi2_upper_tail(uniform_counts, std::vector<double>(n, static_cast<double>(draws) / static_cast<double>(n)));
    const double elapsed = seconds_since(start);

    Outcome o;
    o.pass = worst < 0.02 && uniform_p > 0.01 && elapsed < 10.0;
    o.detail = "max rel err " + fmt("%.4f", worst) + " (limit 0.02; exact-sampler control " +
               fmt("%.4f", control_worst) + "), goodness-of-fit p " + fmt("%.3g", fit_p) +
               ", uniform chi2 p " + fmt("%.3g", uniform_p) + ", " + fmt("%.2f", elapsed) + " s";
    return o;
}

Outcome schedule_endpoints() {
    const SelectionSchedule pressure(1e8, 1.0, 0, 50);
    const double mid = pressure.pressure_at(25);
    const double mid_err = testing::relative_error(mid, 1e4);
    const BatchSchedule exp_batch(BatchMode::exponential, 16, 256, 0, 20);
    const BatchSchedule lin_batch(BatchMode::linear, 16, 256, 0, 20);
    Outcome o;
    o.pass = pressure.pressure_at(0) == 1e8 && pressure.pressure_at(50) == 1.0 && mid_err < 1e-9 &&
             exp_batch.batch_size_at(0) == 16 && exp_batch.batch_size_at(20) == 256 &&
             lin_batch.batch_size_at(0) == 16 && lin_batch.batch_size_at(20) == 256;
    o.detail = "s(0)=" + fmt("%.9g", pressure.pressure_at(0)) + " s(50)=" + fmt("%.9g", pressure.pressure_at(50)) +
               " s(25) rel err " + fmt("%.2e", mid_err) + ", batch endpoints 16/256";
    return o;
}

Outcome optimizer_oracles() {
    double worst = 0.0;
    auto track = [&](double actual, double expected) {
        worst = std::max(worst, testing::relative_error(actual, expected));
    };
    {
        AdaDelta opt(1);
        std::vector<double> x{0.0};
        opt.step(x, std::vector<double>{2.0});
        const double dx = -std::sqrt(1e-6) / std::sqrt(0.200001) * 2.0;
        track(opt.grad_accumulator()[0], 0.2);
        track(x[0], dx);
        track(opt.update_accumulator()[0], 0.05 * dx * dx);
    }
    {
        Adam opt(1);
        std::vector<double> x{0.0};
        opt.step(x, std::vector<double>{2.0});
        track(x[0], -0.001 * 2.0 / (2.0 + 1e-8));
    }
    const double gradients[] = {2.0, -1.0, 0.5, 3.0, -0.25, 0.0, 1.5, -2.5, 0.1, 4.0};
    {
        AdaDelta opt(1);
        testing::AdaDeltaOracle oracle;
        std::vector<double> x{0.7};
        double expected = 0.7;
        for (double g : gradients) {
            opt.step(x, std::vector<double>{g});
            expected = oracle.step(expected, g);
            track(x[0], expected);
        }
    }
    {
        Adam opt(1);
        testing::AdamOracle oracle;
        std::vector<double> x{-0.3};
        double expected = -0.3;
        for (double g : gradients) {
            opt.step(x, std::vector<double>{g});
            expected = oracle.step(expected, g);
            track(x[0], expected);
        }
    }
    return {worst < 1e-12, "max rel err " + fmt("%.2e", worst) + " (limit 1e-12)"};
}

Outcome gradient_correctness() {
    const auto start = Clock::now();
    Rng rng(77);
    double worst = 0.0;
    for (int instance = 0; instance < 20; ++instance) {
        const std::size_t d = 1 + rng.uniform_index(6);
        const std::size_t hidden = 1 + rng.uniform_index(8);
        const std::size_t classes = 2 + rng.uniform_index(5);
        const std::size_t batch = 1 + rng.uniform_index(8);
        const Activation act = instance % 2 == 0 ? Activation::relu : Activation::tanh;
        const ModelParams net = init_params({d, hidden, classes}, act, 1000 + static_cast<std::uint64_t>(instance));
        worst = std::max(worst, testing::gradient_check(net, testing::random_features(batch, d, rng),
                                                        testing::random_labels(batch, classes, rng)));
    }
    const double elapsed = seconds_since(start);
    return {worst < 1e-4 && elapsed < 30.0,
            "max rel err " + fmt("%.2e", worst) + " over 20 nets, " + fmt("%.2f", elapsed) + " s"};
}

Outcome trigger_audit() {
    const Dataset data = synthetic_blobs(100, 4, 3, 0.1, 5);
    RunConfig config;
    config.selection_mode = SelectionMode::ranked;
    config.selection = SelectionSchedule(1e2);
    config.batch = BatchSchedule(10);
    config.sort_period = 30;
    config.recompute_frequency = 0.5;
    config.recompute_ratio = 0.2;
    config.hidden_layers = {8};
    config.epochs = 3;
    Trainer trainer(config, data);
    trainer.train();
    const auto expected = testing::simulate_triggers(100, 10, 30, 0.5, trainer.stats().calls);
    std::size_t refresh = 0, sort = 0, recompute = 0;
    for (const auto& e : trainer.events()) {
        refresh += e.kind == TriggerKind::refresh;
        sort += e.kind == TriggerKind::sort;
        recompute += e.kind == TriggerKind::recompute;
    }
    return {trainer.events() == expected && trainer.stats().calls == 30,
            std::to_string(trainer.stats().calls) + " calls, " + std::to_string(refresh) + " refresh / " +
                std::to_string(sort) + " sort / " + std::to_string(recompute) + " recompute events match"};
}

std::string mnist_dir() {
    const char* env = std::getenv("BATCHSEL_MNIST_DIR");
    return env != nullptr && *env != '\0' ? env : BATCHSEL_DEFAULT_MNIST_DIR;
}

bool mnist_available() {
    return fs::exists(fs::path(mnist_dir()) / "train-images-idx3-ubyte") &&
           fs::exists(fs::path(mnist_dir()) / "train-labels-idx1-ubyte");
}

DataSplit load_benchmark() {
    DataSource source;
    source.kind = DataKind::mnist;
    source.mnist_dir = mnist_dir();
    source.n_train = 5000;
    source.n_val = 0;
    return load_data(source);
}

RunConfig benchmark_config(SelectionMode mode, std::uint64_t seed, int epochs) {
    RunConfig config;
    config.selection_mode = mode;
    config.batch = BatchSchedule(64);
    config.optimizer.kind = OptimizerKind::adam;
    config.hidden_layers = {128};
    config.activation = Activation::relu;
    config.epochs = epochs;
    config.seed = seed;
    config.eval_every = 0.25;
    if (mode == SelectionMode::ranked) {
        config.selection = SelectionSchedule(1e8, 1e8, 0, epochs);
        config.recompute_frequency = 0.5;
        config.recompute_ratio = 1.0;
    }
    return config;
}

struct Guard {
    bool finite = true;
    double selection_fraction = 0.0;
    double wall = 0.0;
};

// Ranked s=1e8 with r_freq=0 on the desk benchmark, checking every batch loss.
Guard run_guard(const DataSplit& data, int epochs) {
    RunConfig config = benchmark_config(SelectionMode::ranked, 1, epochs);
    config.recompute_frequency = 0.0;
    Trainer trainer(config, data.train);
    Guard g;
    const auto target = static_cast<std::int64_t>(epochs) * static_cast<std::int64_t>(data.train.size());
    while (trainer.counters().evaluated < target) {
        const auto s = trainer.step();
        for (double loss : s.result.per_example_losses) g.finite = g.finite && std::isfinite(loss);
        for (double v : s.result.gradient) g.finite = g.finite && std::isfinite(v);
    }
    for (double v : trainer.params().flatten()) g.finite = g.finite && std::isfinite(v);
    g.finite = g.finite && std::isfinite(evaluate(trainer.params(), data.train, 1024).mean_loss);
    g.wall = trainer.wall_seconds();
    g.selection_fraction = trainer.stats().selection_seconds / g.wall;
    return g;
}

Outcome complexity(const DataSplit* data, const Guard* guard) {
    std::size_t worst_excess = 0;
    bool bound = true;
    Rng rng(5);
    for (std::size_t n : {1, 2, 3, 7, 64, 1000, 5000, 65537}) {
        const SelectionDistribution dist = build_distribution(1e8, n);
        const auto limit = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n)))) + 1;
        for (int k = 0; k < 20000; ++k) {
            std::size_t comparisons = 0;
            sample_rank(dist.cumulative, rng.uniform(), &comparisons);
            bound = bound && comparisons <= limit;
            worst_excess = std::max(worst_excess, comparisons > limit ? comparisons - limit : 0);
        }
    }
    Outcome o;
    if (data == nullptr) {
        o.pass = false;
        o.detail = std::string("comparison bound ") + (bound ? "holds" : "violated") +
                   "; MNIST subset missing at " + mnist_dir() + " (run tools/fetch_mnist_subset.py)";
        return o;
    }
    o.pass = bound && guard->selection_fraction < 0.10;
    o.detail = std::string("comparison bound ") + (bound ? "holds" : "violated") + "; selection overhead " +
               fmt("%.2f", 100.0 * guard->selection_fraction) + "% of " + fmt("%.1f", guard->wall) +
               " s training wall time (limit 10%)";
    return o;
}

double epochs_to_reach(const MetricsLog& log, double threshold) {
    for (const auto& row : log.rows) {
        if (row.train_loss <= threshold) return row.epoch;
    }
    return std::numeric_limits<double>::infinity();
}

double loss_at_epoch(const MetricsLog& log, double epoch) {
    for (const auto& row : log.rows) {
        if (row.epoch >= epoch) return row.train_loss;
    }
    return log.rows.back().train_loss;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

Outcome direction_of_effect(const DataSplit& data) {
    const auto start = Clock::now();
    const int epochs = 15;
    std::vector<double> ranked_epochs, shuffle_epochs, ranked_loss5, shuffle_loss5;
    for (std::uint64_t seed = 1; seed <= 11; ++seed) {
        const MetricsLog ranked = train(benchmark_config(SelectionMode::ranked, seed, epochs), data);
        const MetricsLog shuffle = train(benchmark_config(SelectionMode::shuffle, seed, epochs), data);
        ranked_epochs.push_back(epochs_to_reach(ranked, 0.1));
        shuffle_epochs.push_back(epochs_to_reach(shuffle, 0.1));
        ranked_loss5.push_back(loss_at_epoch(ranked, 5.0));
        shuffle_loss5.push_back(loss_at_epoch(shuffle, 5.0));
    }
    const double r = median(ranked_epochs), s = median(shuffle_epochs);
    const double r5 = median(ranked_loss5), s5 = median(shuffle_loss5);
    Outcome o;
    o.pass = r < s && r5 < s5;
    o.detail = "median epochs to loss 0.1: ranked " + fmt("%.2f", r) + ", shuffle " + fmt("%.2f", s) +
               " (speedup " + fmt("%.2f", s / r) + "x); median epoch-5 loss: ranked " + fmt("%.4f", r5) +
               ", shuffle " + fmt("%.4f", s5) + "; " + fmt("%.0f", seconds_since(start)) + " s";
    return o;
}

Outcome importance_sampling() {
    const Dataset data = synthetic_blobs(200, 6, 4, 0.2, 9);
    RunConfig plain;
    plain.selection_mode = SelectionMode::ranked;
    plain.selection = SelectionSchedule(1.0);
    plain.batch = BatchSchedule(16);
    plain.hidden_layers = {10};
    RunConfig weighted = plain;
    weighted.importance_sampling = true;

    Trainer a(plain, data), b(weighted, data);
    bool identical = true;
    for (int call = 0; call < 50; ++call) {
        const auto sa = a.step();
        const auto sb = b.step();
        identical = identical && sa.indices == sb.indices && sa.result.gradient == sb.result.gradient;
    }
    identical = identical && a.params().flatten() == b.params().flatten();

    plain.selection = SelectionSchedule(1e2);
    weighted.selection = SelectionSchedule(1e2);
    Trainer c(plain, data), d(weighted, data);
    bool changed = false;
    for (int call = 0; call < 50; ++call) {
        const auto sc = c.step();
        const auto sd = d.step();
        changed = changed || sc.result.gradient != sd.result.gradient;
    }
    return {identical && changed, std::string("uniform: ") + (identical ? "bitwise equal" : "differs") +
                                      "; s=1e2: gradient " + (changed ? "changes" : "unchanged")};
}

int run_cli(const std::string& config, const std::string& out) {
    const std::string command = std::string("'") + BATCHSEL_CLI_PATH + "' --config '" + config + "' --out '" + out +
                                "' > /dev/null 2>&1";
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
    testing::TempDir dir("acceptance");
    testing::write_text(dir.file("exp.cfg"), R"(dataset = synthetic
synthetic_n = 400
synthetic_d = 8
synthetic_c = 4
repeats = 2
epochs = 3
eval_every = 0.5
hidden = 16
batch_size = 16

[run shuffle]
selection_mode = shuffle

[run ranked]
selection_mode = ranked
s_e0 = 1e8
s_eend = 1e2
e0 = 0
e_end = 3
r_freq = 0.5
r_ratio = 1.0
)");
    const int first = run_cli(dir.file("exp.cfg"), dir.file("a"));
    const int second = run_cli(dir.file("exp.cfg"), dir.file("b"));
    if (first != 0 || second != 0) {
        return {false, "cli exit codes " + std::to_string(first) + ", " + std::to_string(second)};
    }
    std::size_t files = 0;
    bool same = true;
    for (const auto& entry : fs::directory_iterator(dir.file("a"))) {
        const std::string name = entry.path().filename().string();
        const std::string a = testing::read_text(dir.file("a/" + name));
        const std::string b = testing::read_text(dir.file("b/" + name));
        same = same && !a.empty() && testing::without_wall_seconds(a) == testing::without_wall_seconds(b);
        ++files;
    }
    return {same && files == 6, std::to_string(files) + " CSV files " + (same ? "identical" : "differ") +
                                    " apart from wall_seconds"};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const std::string& name, const Outcome& o) {
        std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    };
    auto guarded = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
        try {
            report(id, name, check());
        } catch (const std::exception& e) {
            report(id, name, {false, std::string("exception: ") + e.what()});
        }
    };

    guarded(1, "sampler conformance", sampler_conformance);
    guarded(2, "schedule endpoints", schedule_endpoints);
    guarded(3, "optimizer oracles", optimizer_oracles);
    guarded(4, "gradient correctness", gradient_correctness);
    guarded(5, "trigger audit", trigger_audit);

    const bool have_mnist = mnist_available();
    DataSplit data;
    Guard guard;
    if (have_mnist) {
        data = load_benchmark();
        guard = run_guard(data, 20);
    }
    const std::string missing = "MNIST subset missing at " + mnist_dir() + " (run tools/fetch_mnist_subset.py)";
    guarded(6, "complexity", [&] { return complexity(have_mnist ? &data : nullptr, &guard); });
    guarded(7, "direction of effect", [&] {
        return have_mnist ? direction_of_effect(data) : Outcome{false, missing};
    });
    guarded(8, "divergence guard", [&] {
        return have_mnist ? Outcome{guard.finite, std::string("20 epochs ranked s=1e8 r_freq=0: ") +
                                                      (guard.finite ? "all losses finite" : "non-finite values")}
                          : Outcome{false, missing};
    });
    guarded(9, "importance sampling flag", importance_sampling);
    guarded(10, "determinism", determinism);

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
