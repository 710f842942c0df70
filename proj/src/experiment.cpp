#include "batchsel/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace batchsel {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

const std::set<std::string>& experiment_keys() {
    static const std::set<std::string> keys{
        "dataset",     "mnist_dir",   "n_train",          "n_val",
        "synthetic_n", "synthetic_d", "synthetic_c",      "synthetic_spread",
        "synthetic_seed", "repeats",  "seed",             "out"};
    return keys;
}

const std::set<std::string>& run_keys() {
    static const std::set<std::string> keys{
        "selection_mode", "s_e0",       "s_eend",      "e0",
        "e_end",          "batch_size", "batch_size_end", "batch_mode",
        "batch_e0",       "batch_e_end", "T_s",        "r_freq",
        "r_ratio",        "recompute_batch", "optimizer", "eta",
        "rho",            "adadelta_epsilon", "alpha",  "beta1",
        "beta2",          "adam_epsilon", "hidden",    "activation",
        "epochs",         "importance_sampling", "eval_every", "eval_batch"};
    return keys;
}

struct Entry {
    std::string value;
    int line = 0;
};

using Section = std::map<std::string, Entry>;

// Typed lookups that record a problem instead of throwing, so one pass
// reports every bad field.
class FieldReader {
public:
    FieldReader(const Section& defaults, const Section& section, std::string context,
                std::vector<std::string>& problems)
        : defaults_(defaults), section_(section), context_(std::move(context)), problems_(problems) {}

    const Entry* find(const std::string& key) const {
        if (auto it = section_.find(key); it != section_.end()) return &it->second;
        if (auto it = defaults_.find(key); it != defaults_.end()) return &it->second;
        return nullptr;
    }

    bool has(const std::string& key) const { return find(key) != nullptr; }

    void problem(const std::string& key, const std::string& message) {
        const Entry* entry = find(key);
        std::string where = context_;
        if (entry != nullptr) where += " (line " + std::to_string(entry->line) + ")";
        problems_.push_back(where + ": " + key + ": " + message);
    }

    double real(const std::string& key, double fallback) {
        const Entry* entry = find(key);
        if (entry == nullptr) return fallback;
        const char* text = entry->value.c_str();
        char* end = nullptr;
        errno = 0;
        const double value = std::strtod(text, &end);
        if (end == text || *end != '\0' || errno == ERANGE || std::isnan(value)) {
            problem(key, "expected a number, got '" + entry->value + "'");
            return fallback;
        }
        return value;
    }

    long long integer(const std::string& key, long long fallback) {
        const Entry* entry = find(key);
        if (entry == nullptr) return fallback;
        const char* text = entry->value.c_str();
        char* end = nullptr;
        errno = 0;
        const long long value = std::strtoll(text, &end, 10);
        if (end == text || *end != '\0' || errno == ERANGE) {
            problem(key, "expected an integer, got '" + entry->value + "'");
            return fallback;
        }
        return value;
    }

    std::size_t count(const std::string& key, std::size_t fallback, long long minimum) {
        const long long value = integer(key, static_cast<long long>(fallback));
        if (value < minimum) {
            problem(key, "must be at least " + std::to_string(minimum));
            return fallback;
        }
        return static_cast<std::size_t>(value);
    }

    bool flag(const std::string& key, bool fallback) {
        const Entry* entry = find(key);
        if (entry == nullptr) return fallback;
        const std::string& v = entry->value;
        if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
        if (v == "false" || v == "no" || v == "0" || v == "off") return false;
        problem(key, "expected true or false, got '" + v + "'");
        return fallback;
    }

    std::string choice(const std::string& key, const std::string& fallback,
                       const std::vector<std::string>& allowed) {
        const Entry* entry = find(key);
        if (entry == nullptr) return fallback;
        if (std::find(allowed.begin(), allowed.end(), entry->value) == allowed.end()) {
            problem(key, "expected one of {" + join(allowed, ", ") + "}, got '" + entry->value +
                             "'");
            return fallback;
        }
        return entry->value;
    }

    std::string text(const std::string& key, const std::string& fallback) const {
        const Entry* entry = find(key);
        return entry == nullptr ? fallback : entry->value;
    }

private:
    const Section& defaults_;
    const Section& section_;
    std::string context_;
    std::vector<std::string>& problems_;
};

RunConfig build_run(FieldReader& fields) {
    RunConfig config;
    const std::string mode = fields.choice("selection_mode", "shuffle", {"random", "shuffle", "ranked"});
    config.selection_mode = mode == "random"   ? SelectionMode::random
                            : mode == "ranked" ? SelectionMode::ranked
                                               : SelectionMode::shuffle;

    if (config.selection_mode == SelectionMode::ranked && !fields.has("s_e0")) {
        fields.problem("s_e0", "required when selection_mode = ranked");
    }
    const double s_start = fields.real("s_e0", 1.0);
    const double s_end = fields.real("s_eend", s_start);
    try {
        if (s_end != s_start) {
            if (!fields.has("e_end")) {
                fields.problem("e_end", "required when s_eend differs from s_e0");
            } else {
                config.selection = SelectionSchedule(
                    s_start, s_end, static_cast<int>(fields.integer("e0", 0)),
                    static_cast<int>(fields.integer("e_end", 1)));
            }
        } else {
            config.selection = SelectionSchedule(s_start);
        }
    } catch (const ArgumentError& e) {
        fields.problem("s_e0", e.what());
    }

    const std::size_t b_start = fields.count("batch_size", 64, 1);
    const std::string batch_mode =
        fields.choice("batch_mode", "constant", {"constant", "exponential", "linear"});
    try {
        if (batch_mode == "constant") {
            config.batch = BatchSchedule(b_start);
        } else {
            for (const char* key : {"batch_size_end", "batch_e_end"}) {
                if (!fields.has(key)) {
                    fields.problem(key, "required when batch_mode = " + batch_mode);
                }
            }
            config.batch = BatchSchedule(
                batch_mode == "linear" ? BatchMode::linear : BatchMode::exponential, b_start,
                fields.count("batch_size_end", b_start, 1),
                static_cast<int>(fields.integer("batch_e0", 0)),
                static_cast<int>(fields.integer("batch_e_end", 1)));
        }
    } catch (const ArgumentError& e) {
        fields.problem("batch_size", e.what());
    }

    const std::string sort_period = fields.text("T_s", "auto");
    if (sort_period == "inf") {
        config.sort_period = kNeverSort;
    } else if (sort_period != "auto") {
        config.sort_period = fields.integer("T_s", 0);
    }
    config.recompute_frequency = fields.real("r_freq", 0.0);
    config.recompute_ratio = fields.real("r_ratio", 1.0);
    config.recompute_batch = fields.count("recompute_batch", 1024, 1);

    const std::string optimizer = fields.choice("optimizer", "adam", {"sgd", "adadelta", "adam"});
    config.optimizer.kind = optimizer == "sgd"        ? OptimizerKind::sgd
                            : optimizer == "adadelta" ? OptimizerKind::adadelta
                                                      : OptimizerKind::adam;
    config.optimizer.sgd_learning_rate = fields.real("eta", config.optimizer.sgd_learning_rate);
    config.optimizer.adadelta_rho = fields.real("rho", config.optimizer.adadelta_rho);
    config.optimizer.adadelta_epsilon =
        fields.real("adadelta_epsilon", config.optimizer.adadelta_epsilon);
    config.optimizer.adam_alpha = fields.real("alpha", config.optimizer.adam_alpha);
    config.optimizer.adam_beta1 = fields.real("beta1", config.optimizer.adam_beta1);
    config.optimizer.adam_beta2 = fields.real("beta2", config.optimizer.adam_beta2);
    config.optimizer.adam_epsilon = fields.real("adam_epsilon", config.optimizer.adam_epsilon);

    if (fields.has("hidden")) {
        config.hidden_layers.clear();
        const std::string hidden = fields.text("hidden", "");
        if (hidden != "none" && !hidden.empty()) {
            std::stringstream stream(hidden);
            std::string part;
            while (std::getline(stream, part, ',')) {
                part = trim(part);
                char* end = nullptr;
                const long long width = std::strtoll(part.c_str(), &end, 10);
                if (part.empty() || *end != '\0' || width < 1) {
                    fields.problem("hidden", "expected comma-separated positive sizes or 'none'");
                    break;
                }
                config.hidden_layers.push_back(static_cast<std::size_t>(width));
            }
        }
    }
    config.activation =
        fields.choice("activation", "relu", {"relu", "tanh"}) == "tanh" ? Activation::tanh
                                                                        : Activation::relu;
    config.epochs = static_cast<int>(fields.count("epochs", 1, 1));
    config.importance_sampling = fields.flag("importance_sampling", false);
    config.eval_every = fields.real("eval_every", 1.0);
    config.eval_batch = fields.count("eval_batch", 1024, 1);

    try {
        config.validate();
    } catch (const ArgumentError& e) {
        fields.problem("config", e.what());
    }
    return config;
}

bool valid_run_name(const std::string& name) {
    if (name.empty()) return false;
    return std::all_of(name.begin(), name.end(), [](char ch) {
        return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
    });
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : ArgumentError("invalid configuration:\n  " + join(problems, "\n  ")),
      problems_(std::move(problems)) {}

ExperimentSpec parse_config_text(const std::string& text) {
    std::vector<std::string> problems;
    Section globals;
    std::vector<std::pair<std::string, Section>> runs;
    std::set<std::string> run_names;

    std::istringstream stream(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(stream, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);

        if (line.front() == '[') {
            if (line.back() != ']') {
                problems.push_back(where + ": unterminated section header");
                continue;
            }
            const std::string inner = trim(line.substr(1, line.size() - 2));
            if (inner.rfind("run", 0) != 0 || inner.size() < 4 ||
                (inner[3] != ' ' && inner[3] != '\t')) {
                problems.push_back(where + ": expected a section header of the form [run <name>]");
                continue;
            }
            const std::string name = trim(inner.substr(3));
            if (!valid_run_name(name)) {
                problems.push_back(where + ": invalid run name '" + name + "'");
                continue;
            }
            if (!run_names.insert(name).second) {
                problems.push_back(where + ": duplicate run name '" + name + "'");
                continue;
            }
            runs.emplace_back(name, Section{});
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            problems.push_back(where + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            problems.push_back(where + ": expected 'key = value'");
            continue;
        }
        const bool in_run = !runs.empty();
        const bool known = run_keys().count(key) > 0 || (!in_run && experiment_keys().count(key) > 0);
        if (!known) {
            problems.push_back(where + ": unknown key '" + key + "'");
            continue;
        }
        Section& target = in_run ? runs.back().second : globals;
        if (target.count(key) > 0) {
            problems.push_back(where + ": duplicate key '" + key + "'");
            continue;
        }
        target[key] = Entry{value, line_no};
    }

    ExperimentSpec spec;
    const Section empty;
    FieldReader experiment(empty, globals, "experiment", problems);
    const std::string dataset = experiment.choice("dataset", "synthetic", {"synthetic", "mnist"});
    spec.data.kind = dataset == "mnist" ? DataKind::mnist : DataKind::synthetic;
    spec.data.mnist_dir = experiment.text("mnist_dir", "");
    if (experiment.has("n_train")) spec.data.n_train = experiment.count("n_train", 0, 1);
    if (experiment.has("n_val")) spec.data.n_val = experiment.count("n_val", 0, 0);
    spec.data.synthetic.n = experiment.count("synthetic_n", spec.data.synthetic.n, 2);
    spec.data.synthetic.d = experiment.count("synthetic_d", spec.data.synthetic.d, 1);
    spec.data.synthetic.c =
        static_cast<int>(experiment.count("synthetic_c", static_cast<std::size_t>(spec.data.synthetic.c), 2));
    spec.data.synthetic.spread = experiment.real("synthetic_spread", spec.data.synthetic.spread);
    spec.data.synthetic.seed =
        static_cast<std::uint64_t>(experiment.count("synthetic_seed", spec.data.synthetic.seed, 0));
    spec.repeats = static_cast<int>(experiment.count("repeats", 1, 1));
    spec.seed = static_cast<std::uint64_t>(experiment.count("seed", 1, 0));
    spec.out_dir = experiment.text("out", spec.out_dir);

    if (runs.empty()) {
        problems.push_back("no [run <name>] sections");
    }
    for (const auto& [name, section] : runs) {
        FieldReader fields(globals, section, "run '" + name + "'", problems);
        spec.runs.push_back(NamedRun{name, build_run(fields)});
    }
    if (!problems.empty()) {
        throw ConfigError(std::move(problems));
    }
    return spec;
}

ExperimentSpec parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

void apply_synthetic_overrides(DataSource& source, const std::string& overrides) {
    source.kind = DataKind::synthetic;
    std::stringstream stream(overrides);
    std::string item;
    std::vector<std::string> problems;
    while (std::getline(stream, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            problems.push_back("--synthetic: expected key=value, got '" + item + "'");
            continue;
        }
        const std::string key = trim(item.substr(0, eq));
        const std::string value = trim(item.substr(eq + 1));
        char* end = nullptr;
        const double number = std::strtod(value.c_str(), &end);
        if (value.empty() || *end != '\0') {
            problems.push_back("--synthetic: " + key + ": expected a number");
            continue;
        }
        if (key == "n") {
            source.synthetic.n = static_cast<std::size_t>(number);
        } else if (key == "d") {
            source.synthetic.d = static_cast<std::size_t>(number);
        } else if (key == "c") {
            source.synthetic.c = static_cast<int>(number);
        } else if (key == "spread") {
            source.synthetic.spread = number;
        } else if (key == "seed") {
            source.synthetic.seed = static_cast<std::uint64_t>(number);
        } else {
            problems.push_back("--synthetic: unknown key '" + key + "'");
        }
    }
    if (!problems.empty()) {
        throw ConfigError(std::move(problems));
    }
}

DataSplit load_data(const DataSource& source) {
    if (source.kind == DataKind::synthetic) {
        const SyntheticParams& p = source.synthetic;
        Dataset all = synthetic_blobs(p.n, p.d, p.c, p.spread, p.seed);
        const std::size_t n_val = source.n_val.value_or(all.size() / 5);
        const std::size_t n_train =
            source.n_train.value_or(all.size() - std::min(n_val, all.size()));
        return split(all, n_train, n_val);
    }
    if (source.mnist_dir.empty()) {
        throw ArgumentError("dataset = mnist needs mnist_dir or --mnist-dir");
    }
    const fs::path dir(source.mnist_dir);
    Dataset all = load_idx((dir / "train-images-idx3-ubyte").string(),
                           (dir / "train-labels-idx1-ubyte").string());
    const std::size_t n_val = source.n_val.value_or(std::min<std::size_t>(10000, all.size() / 6));
    const std::size_t n_train = source.n_train.value_or(all.size() - std::min(n_val, all.size()));
    DataSplit parts = split(all, n_train, n_val);
    const fs::path test_images = dir / "t10k-images-idx3-ubyte";
    const fs::path test_labels = dir / "t10k-labels-idx1-ubyte";
    if (fs::exists(test_images) && fs::exists(test_labels)) {
        parts.test = load_idx(test_images.string(), test_labels.string());
    }
    return parts;
}

namespace {

void append_number(std::string& out, double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.9g", value);
    out += buffer;
}

}  // namespace

std::string format_csv(const MetricsLog& log) {
    std::string out = kCsvHeader;
    out += '\n';
    for (const MetricsRow& row : log.rows) {
        const double values[] = {row.epoch,      row.wall_seconds,
                                 row.train_loss, row.train_error,
                                 row.val_loss,   row.val_error,
                                 static_cast<double>(row.n_eff), row.pressure,
                                 static_cast<double>(row.batch_size)};
        for (std::size_t i = 0; i < std::size(values); ++i) {
            if (i > 0) out += ',';
            append_number(out, values[i]);
        }
        out += '\n';
    }
    return out;
}

namespace {

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end(), [](double a, double b) {
        // NaN sorts last so it only surfaces when most repeats produced it.
        if (std::isnan(a)) return false;
        if (std::isnan(b)) return true;
        return a < b;
    });
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) {
        return values[mid];
    }
    return 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace

MetricsLog median_log(const std::vector<MetricsLog>& logs) {
    MetricsLog out;
    if (logs.empty()) {
        return out;
    }
    std::size_t rows = logs.front().rows.size();
    for (const MetricsLog& log : logs) {
        rows = std::min(rows, log.rows.size());
    }
    for (std::size_t r = 0; r < rows; ++r) {
        auto column = [&](auto member) {
            std::vector<double> values;
            for (const MetricsLog& log : logs) {
                values.push_back(static_cast<double>(log.rows[r].*member));
            }
            return median_of(std::move(values));
        };
        MetricsRow row;
        row.epoch = column(&MetricsRow::epoch);
        row.wall_seconds = column(&MetricsRow::wall_seconds);
        row.train_loss = column(&MetricsRow::train_loss);
        row.train_error = column(&MetricsRow::train_error);
        row.val_loss = column(&MetricsRow::val_loss);
        row.val_error = column(&MetricsRow::val_error);
        row.n_eff = static_cast<std::size_t>(std::llround(column(&MetricsRow::n_eff)));
        row.pressure = column(&MetricsRow::pressure);
        row.batch_size = static_cast<std::size_t>(std::llround(column(&MetricsRow::batch_size)));
        out.rows.push_back(row);
    }
    return out;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string temp = path + ".tmp";
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + temp);
        }
        out << contents;
        if (!out) {
            throw IoError("failed writing " + temp);
        }
    }
    std::error_code ec;
    fs::rename(temp, path, ec);
    if (ec) {
        throw IoError("cannot rename " + temp + " to " + path + ": " + ec.message());
    }
}

int run_experiment(const ExperimentSpec& spec, std::ostream& log) {
    DataSplit data;
    try {
        data = load_data(spec.data);
        fs::create_directories(spec.out_dir);
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return 2;
    }

    struct Job {
        std::size_t run;
        int repeat;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < spec.runs.size(); ++r) {
        for (int k = 0; k < spec.repeats; ++k) {
            jobs.push_back({r, k});
        }
    }
    std::vector<std::vector<MetricsLog>> results(spec.runs.size(),
                                                 std::vector<MetricsLog>(static_cast<std::size_t>(spec.repeats)));

    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* cap = std::getenv("BATCHSEL_THREADS")) {
        const long value = std::strtol(cap, nullptr, 10);
        if (value >= 1) threads = static_cast<std::size_t>(value);
    }
    threads = std::min(threads, jobs.size());

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            const Job job = jobs[j];
            const NamedRun& run = spec.runs[job.run];
            const std::uint64_t seed = spec.seed + static_cast<std::uint64_t>(job.repeat);
            try {
                RunConfig config = run.config;
                config.seed = seed;
                MetricsLog metrics = train(config, data);
                write_file_atomic(
                    (fs::path(spec.out_dir) / (run.name + "_seed" + std::to_string(seed) + ".csv"))
                        .string(),
                    format_csv(metrics));
                const double final_loss = metrics.rows.back().train_loss;
                results[job.run][static_cast<std::size_t>(job.repeat)] = std::move(metrics);
                std::lock_guard lock(log_mutex);
                log << run.name << " seed " << seed << ": final train loss " << final_loss << '\n';
            } catch (const std::exception& e) {
                failed = true;
                std::lock_guard lock(log_mutex);
                log << "error: run '" << run.name << "' seed " << seed << ": " << e.what() << '\n';
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& thread : pool) {
        thread.join();
    }
    if (failed) {
        return 1;
    }

    try {
        for (std::size_t r = 0; r < spec.runs.size(); ++r) {
            write_file_atomic((fs::path(spec.out_dir) / (spec.runs[r].name + "_median.csv")).string(),
                              format_csv(median_log(results[r])));
        }
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace batchsel
