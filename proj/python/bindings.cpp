#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "batchsel/dataset.hpp"
#include "batchsel/experiment.hpp"
#include "batchsel/model.hpp"
#include "batchsel/optim.hpp"
#include "batchsel/sampler.hpp"
#include "batchsel/trainer.hpp"

namespace py = pybind11;
using namespace batchsel;

namespace {

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return std::vector<double>(a.data(), a.data() + a.size());
}

py::array_t<double> to_array(const std::vector<double>& v) {
    return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

template <typename Optimizer>
py::array_t<double> step_copy(Optimizer& opt, const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                              const py::array_t<double, py::array::c_style | py::array::forcecast>& g) {
    std::vector<double> xs = to_vector(x);
    const std::vector<double> gs = to_vector(g);
    opt.step(xs, gs);
    return to_array(xs);
}

py::dict row_to_dict(const MetricsRow& row) {
    py::dict d;
    d["epoch"] = row.epoch;
    d["wall_seconds"] = row.wall_seconds;
    d["train_loss"] = row.train_loss;
    d["train_error"] = row.train_error;
    d["val_loss"] = row.val_loss;
    d["val_error"] = row.val_error;
    d["n_eff"] = row.n_eff;
    d["s_e"] = row.pressure;
    d["b_e"] = row.batch_size;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Online rank-based batch selection for SGD, AdaDelta and Adam";

    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ConsistencyError>(m, "ConsistencyError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    // ArgumentError derives from std::invalid_argument, which pybind11 maps to ValueError.

    // dataset -----------------------------------------------------------------
    py::class_<Dataset>(m, "Dataset")
        .def(py::init<RowMatrix, std::vector<int>, int>(), py::arg("features"), py::arg("labels"),
             py::arg("num_classes"))
        .def_property_readonly("features", &Dataset::features)
        .def_property_readonly("labels", &Dataset::labels)
        .def_property_readonly("num_classes", &Dataset::num_classes)
        .def_property_readonly("dim", &Dataset::dim)
        .def("__len__", &Dataset::size);

    py::class_<DataSplit>(m, "DataSplit")
        .def(py::init([](const Dataset& train, const Dataset& validation) {
                 return DataSplit{train, validation, Dataset{}};
             }),
             py::arg("train"), py::arg("validation") = Dataset{})
        .def_readonly("train", &DataSplit::train)
        .def_readonly("validation", &DataSplit::validation)
        .def_readonly("test", &DataSplit::test);

    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"),
          py::arg("num_classes") = 10);
    m.def("split", &split, py::arg("dataset"), py::arg("n_train"), py::arg("n_val"));
    m.def("synthetic_blobs", &synthetic_blobs, py::arg("n"), py::arg("d"), py::arg("c"),
          py::arg("spread"), py::arg("seed"));

    // sampler -----------------------------------------------------------------
    py::class_<SelectionSchedule>(m, "SelectionSchedule")
        .def(py::init<double>(), py::arg("pressure"))
        .def(py::init<double, double, int, int>(), py::arg("s_e0"), py::arg("s_eend"),
             py::arg("e0"), py::arg("e_end"))
        .def("pressure_at", &SelectionSchedule::pressure_at, py::arg("epoch"));

    py::class_<SelectionDistribution>(m, "SelectionDistribution")
        .def_readonly("probabilities", &SelectionDistribution::probabilities)
        .def_readonly("cumulative", &SelectionDistribution::cumulative)
        .def_readonly("pressure", &SelectionDistribution::pressure);
    m.def("build_distribution", &build_distribution, py::arg("s"), py::arg("n"));
    m.def(
        "sample_rank",
        [](const std::vector<double>& cumulative, double r) { return sample_rank(cumulative, r); },
        py::arg("cumulative"), py::arg("r"));

    py::class_<LossRankTable>(m, "LossRankTable")
        .def(py::init<std::size_t>(), py::arg("n"))
        .def("update_loss", &LossRankTable::update_loss, py::arg("datapoint"), py::arg("loss"))
        .def("sort", &LossRankTable::sort)
        .def("rank_of", &LossRankTable::rank_of)
        .def("entries", [](const LossRankTable& t) {
            std::vector<std::pair<double, std::size_t>> out;
            for (const auto& e : t.entries()) out.emplace_back(e.loss, e.index);
            return out;
        })
        .def("__len__", &LossRankTable::size);

    py::enum_<BatchMode>(m, "BatchMode")
        .value("constant", BatchMode::constant)
        .value("exponential", BatchMode::exponential)
        .value("linear", BatchMode::linear);
    py::class_<BatchSchedule>(m, "BatchSchedule")
        .def(py::init<std::size_t>(), py::arg("batch_size"))
        .def(py::init<BatchMode, std::size_t, std::size_t, int, int>(), py::arg("mode"),
             py::arg("b_e0"), py::arg("b_eend"), py::arg("e0"), py::arg("e_end"))
        .def("batch_size_at", &BatchSchedule::batch_size_at, py::arg("epoch"));

    // optim -------------------------------------------------------------------
    py::class_<Sgd>(m, "Sgd")
        .def(py::init<double>(), py::arg("learning_rate") = 0.1)
        .def("step", [](const Sgd& opt, const py::array_t<double>& x, const py::array_t<double>& g) {
            std::vector<double> xs = to_vector(x);
            opt.step(xs, to_vector(g));
            return to_array(xs);
        });
    py::class_<AdaDelta>(m, "AdaDelta")
        .def(py::init<std::size_t, double, double>(), py::arg("n"), py::arg("rho") = 0.95,
             py::arg("epsilon") = 1e-6)
        .def("step", &step_copy<AdaDelta>)
        .def_property_readonly("v", &AdaDelta::grad_accumulator)
        .def_property_readonly("s", &AdaDelta::update_accumulator);
    py::class_<Adam>(m, "Adam")
        .def(py::init<std::size_t, double, double, double, double>(), py::arg("n"),
             py::arg("alpha") = 0.001, py::arg("beta1") = 0.9, py::arg("beta2") = 0.999,
             py::arg("epsilon") = 1e-8)
        .def("step", &step_copy<Adam>)
        .def_property_readonly("m", &Adam::first_moment)
        .def_property_readonly("v", &Adam::second_moment)
        .def_property_readonly("t", &Adam::timestep);

    // model -------------------------------------------------------------------
    py::enum_<Activation>(m, "Activation")
        .value("relu", Activation::relu)
        .value("tanh", Activation::tanh);
    py::class_<ModelParams>(m, "ModelParams")
        .def(py::init<std::vector<std::size_t>, Activation>(), py::arg("layer_sizes"),
             py::arg("activation") = Activation::relu)
        .def_property_readonly("layer_sizes", &ModelParams::layer_sizes)
        .def("__len__", &ModelParams::size)
        .def("flatten", [](const ModelParams& p) { return to_array(p.flatten()); })
        .def("unflatten", [](ModelParams& p, const py::array_t<double>& values) {
            p.unflatten(to_vector(values));
        });
    m.def("init_params", &init_params, py::arg("layer_sizes"), py::arg("activation"), py::arg("seed"));

    py::class_<BatchResult>(m, "BatchResult")
        .def_readonly("per_example_losses", &BatchResult::per_example_losses)
        .def_readonly("mean_loss", &BatchResult::mean_loss)
        .def_property_readonly("gradient", [](const BatchResult& r) { return to_array(r.gradient); });
    m.def(
        "forward_loss",
        [](const ModelParams& p, const RowMatrix& x, const std::vector<int>& y) {
            return forward_loss(p, x, y);
        },
        py::arg("params"), py::arg("features"), py::arg("labels"));
    m.def(
        "forward_backward",
        [](const ModelParams& p, const RowMatrix& x, const std::vector<int>& y,
           const std::vector<double>& weights) { return forward_backward(p, x, y, weights); },
        py::arg("params"), py::arg("features"), py::arg("labels"),
        py::arg("weights") = std::vector<double>{});
    m.def(
        "evaluate",
        [](const ModelParams& p, const Dataset& d, std::size_t eval_batch) {
            const Evaluation e = evaluate(p, d, eval_batch);
            return py::make_tuple(e.mean_loss, e.error_rate);
        },
        py::arg("params"), py::arg("dataset"), py::arg("eval_batch") = 1024);

    // trainer -----------------------------------------------------------------
    py::enum_<SelectionMode>(m, "SelectionMode")
        .value("random", SelectionMode::random)
        .value("shuffle", SelectionMode::shuffle)
        .value("ranked", SelectionMode::ranked);
    py::enum_<OptimizerKind>(m, "OptimizerKind")
        .value("sgd", OptimizerKind::sgd)
        .value("adadelta", OptimizerKind::adadelta)
        .value("adam", OptimizerKind::adam);

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_readwrite("selection_mode", &RunConfig::selection_mode)
        .def_readwrite("selection", &RunConfig::selection)
        .def_readwrite("batch", &RunConfig::batch)
        .def_readwrite("sort_period", &RunConfig::sort_period)
        .def_readwrite("r_freq", &RunConfig::recompute_frequency)
        .def_readwrite("r_ratio", &RunConfig::recompute_ratio)
        .def_readwrite("recompute_batch", &RunConfig::recompute_batch)
        .def_property(
            "optimizer", [](const RunConfig& c) { return c.optimizer.kind; },
            [](RunConfig& c, OptimizerKind k) { c.optimizer.kind = k; })
        .def_readwrite("hidden_layers", &RunConfig::hidden_layers)
        .def_readwrite("activation", &RunConfig::activation)
        .def_readwrite("epochs", &RunConfig::epochs)
        .def_readwrite("seed", &RunConfig::seed)
        .def_readwrite("importance_sampling", &RunConfig::importance_sampling)
        .def_readwrite("eval_every", &RunConfig::eval_every)
        .def_readwrite("eval_batch", &RunConfig::eval_batch);

    m.def(
        "train",
        [](const RunConfig& config, const DataSplit& data) {
            py::list rows;
            for (const MetricsRow& row : train(config, data).rows) rows.append(row_to_dict(row));
            return rows;
        },
        py::arg("config"), py::arg("split"));
    m.def(
        "compute_n_eff",
        [](const std::vector<std::size_t>& history, std::size_t n) { return compute_n_eff(history, n); },
        py::arg("history"), py::arg("n"));
    m.def(
        "importance_weights",
        [](const std::vector<double>& p) { return importance_weights(p); }, py::arg("probabilities"));

    // experiment --------------------------------------------------------------
    py::class_<ExperimentSpec>(m, "ExperimentSpec")
        .def_property_readonly("run_names",
                               [](const ExperimentSpec& s) {
                                   std::vector<std::string> names;
                                   for (const auto& r : s.runs) names.push_back(r.name);
                                   return names;
                               })
        .def_readwrite("out_dir", &ExperimentSpec::out_dir)
        .def_readwrite("repeats", &ExperimentSpec::repeats)
        .def_readwrite("seed", &ExperimentSpec::seed);
    m.def("parse_config", &parse_config, py::arg("path"));
    m.def("parse_config_text", &parse_config_text, py::arg("text"));
    m.def(
        "run_experiment",
        [](const ExperimentSpec& spec) {
            std::ostringstream log;
            const int status = run_experiment(spec, log);
            return py::make_tuple(status, log.str());
        },
        py::arg("spec"));
}
