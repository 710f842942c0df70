// Experiment runner: trains every configured run for each seed and writes
// per-seed and median CSV logs.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "batchsel/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Online rank-based batch selection experiments"};

    std::string config_path;
    std::string out_dir;
    std::string mnist_dir;
    std::string synthetic;
    int repeats = 0;
    long long seed = -1;

    app.add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory for CSV logs");
    app.add_option("--mnist-dir", mnist_dir,
                   "Directory holding train-images-idx3-ubyte / train-labels-idx1-ubyte "
                   "(and optionally the t10k pair)");
    app.add_option("--synthetic", synthetic,
                   "Use synthetic blobs, overriding n=,d=,c=,spread=,seed= (comma separated)");
    app.add_option("--repeats", repeats, "Seeds per run (seed, seed+1, ...)")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "First seed")->check(CLI::NonNegativeNumber);

    CLI11_PARSE(app, argc, argv);

    batchsel::ExperimentSpec spec;
    try {
        spec = batchsel::parse_config(config_path);
        if (!out_dir.empty()) spec.out_dir = out_dir;
        if (!mnist_dir.empty()) {
            spec.data.kind = batchsel::DataKind::mnist;
            spec.data.mnist_dir = mnist_dir;
        }
        if (app.count("--synthetic") > 0) {
            batchsel::apply_synthetic_overrides(spec.data, synthetic);
        }
        if (repeats > 0) spec.repeats = repeats;
        if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return batchsel::run_experiment(spec, std::cerr);
}
