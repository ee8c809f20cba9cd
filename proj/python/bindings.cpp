#include "cocge/config.hpp"
#include "cocge/dataio.hpp"
#include "cocge/evaluator.hpp"
#include "cocge/feasibility.hpp"
#include "cocge/graph.hpp"
#include "cocge/network.hpp"
#include "cocge/objective.hpp"
#include "cocge/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace cocge;

namespace {

Dataset dataset_from_dir(const std::string& dir) { return load_dataset(dir); }

TrainConfig config_from_text(const std::string& text) {
    return train_config_from_config(ConfigFile::parse_text(text));
}

SynthSpec spec_from_text(const std::string& text) {
    return synth_spec_from_config(ConfigFile::parse_text(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "graph-propagated composition embeddings with feasibility-aware "
              "open-world training and calibrated evaluation";

    py::register_exception<config_error>(m, "ConfigError");
    py::register_exception<numeric_error>(m, "NumericError");

    py::enum_<WorldMode>(m, "WorldMode")
        .value("CLOSED", WorldMode::Closed)
        .value("OPEN", WorldMode::Open);
    py::enum_<TrainMode>(m, "TrainMode")
        .value("CLOSED", TrainMode::Closed)
        .value("OPEN", TrainMode::Open)
        .value("OPEN_FROZEN_GRAPH", TrainMode::OpenFrozenGraph);
    py::enum_<MixRule>(m, "MixRule").value("AVG", MixRule::Avg).value("MAX", MixRule::Max);
    py::enum_<ModelKind>(m, "ModelKind")
        .value("COCGE", ModelKind::CoCge)
        .value("VISUAL_PRODUCT", ModelKind::VisualProduct)
        .value("WORD_AVG", ModelKind::WordAvg);

    py::class_<Vocabulary>(m, "Vocabulary")
        .def_readonly("states", &Vocabulary::states)
        .def_readonly("objects", &Vocabulary::objects)
        .def_property_readonly("seen_pairs",
                               [](const Vocabulary& v) {
                                   return std::vector<Pair>(v.seen_pairs.begin(),
                                                            v.seen_pairs.end());
                               })
        .def_property_readonly("closed_unseen_pairs",
                               [](const Vocabulary& v) {
                                   return std::vector<Pair>(v.closed_unseen_pairs.begin(),
                                                            v.closed_unseen_pairs.end());
                               });

    py::class_<SynthSpec>(m, "SynthSpec")
        .def(py::init(&SynthSpec::defaults))
        .def_static("from_text", &spec_from_text, py::arg("text"))
        .def_readwrite("n_states", &SynthSpec::n_states)
        .def_readwrite("n_objects", &SynthSpec::n_objects)
        .def_readwrite("object_groups", &SynthSpec::object_groups)
        .def_readwrite("applicable", &SynthSpec::applicable)
        .def_readwrite("samples_per_seen_pair", &SynthSpec::samples_per_seen_pair)
        .def_readwrite("feature_dim", &SynthSpec::feature_dim)
        .def_readwrite("noise_std", &SynthSpec::noise_std)
        .def_readwrite("seed", &SynthSpec::seed);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("vocab", &Dataset::vocab)
        .def_property_readonly("feasible_gt",
                               [](const Dataset& d) {
                                   std::vector<Pair> out;
                                   if (d.feasible_gt)
                                       out.assign(d.feasible_gt->begin(), d.feasible_gt->end());
                                   return out;
                               })
        .def_property_readonly("n_train", [](const Dataset& d) { return d.train.size(); })
        .def_property_readonly("n_val", [](const Dataset& d) { return d.val.size(); })
        .def_property_readonly("n_test", [](const Dataset& d) { return d.test.size(); });

    py::class_<FeasibilityTable>(m, "FeasibilityTable")
        .def_readonly("rho", &FeasibilityTable::rho)
        .def("at", &FeasibilityTable::at, py::arg("state"), py::arg("object"))
        .def("is_seen", &FeasibilityTable::is_seen, py::arg("state"), py::arg("object"));

    py::class_<CompositionalGraph>(m, "CompositionalGraph")
        .def_readonly("v0", &CompositionalGraph::v0)
        .def_readonly("adj", &CompositionalGraph::adj)
        .def_readonly("adj_norm", &CompositionalGraph::adj_norm)
        .def_property_readonly("n_nodes", [](const CompositionalGraph& g) {
            return g.index.n_nodes();
        });

    py::class_<LossConfig>(m, "LossConfig")
        .def(py::init<>())
        .def_readwrite("temperature", &LossConfig::temperature)
        .def_readwrite("alpha_max", &LossConfig::alpha_max)
        .def_readwrite("warmup_epochs", &LossConfig::warmup_epochs)
        .def_readwrite("clamp_margin_rho_at_zero", &LossConfig::clamp_margin_rho_at_zero);

    py::class_<EdgeWeighting>(m, "EdgeWeighting")
        .def(py::init<>())
        .def_readwrite("state_object", &EdgeWeighting::state_object)
        .def_readwrite("prim_to_comp", &EdgeWeighting::prim_to_comp)
        .def_readwrite("comp_to_prim", &EdgeWeighting::comp_to_prim);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_static("from_text", &config_from_text, py::arg("text"))
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("mode", &TrainConfig::mode)
        .def_readwrite("eval_every", &TrainConfig::eval_every)
        .def_readwrite("loss", &TrainConfig::loss)
        .def_readwrite("switches", &TrainConfig::switches)
        .def_readwrite("mix_rule", &TrainConfig::mix_rule)
        .def_readwrite("gcn_hidden", &TrainConfig::gcn_hidden)
        .def_readwrite("shared_dim", &TrainConfig::shared_dim)
        .def_readwrite("img_hidden", &TrainConfig::img_hidden)
        .def_readwrite("dropout", &TrainConfig::dropout);

    py::class_<CurvePoint>(m, "CurvePoint")
        .def_readonly("bias", &CurvePoint::bias)
        .def_readonly("seen_acc", &CurvePoint::seen_acc)
        .def_readonly("unseen_acc", &CurvePoint::unseen_acc);

    py::class_<EvalReport>(m, "EvalReport")
        .def_readonly("curve", &EvalReport::curve)
        .def_readonly("best_seen", &EvalReport::best_seen)
        .def_readonly("best_unseen", &EvalReport::best_unseen)
        .def_readonly("best_hm", &EvalReport::best_hm)
        .def_readonly("best_hm_bias", &EvalReport::best_hm_bias)
        .def_readonly("auc", &EvalReport::auc)
        .def_readonly("mode", &EvalReport::mode)
        .def("to_json", &report_to_json);

    py::class_<EpochRecord>(m, "EpochRecord")
        .def_readonly("epoch", &EpochRecord::epoch)
        .def_readonly("alpha", &EpochRecord::alpha)
        .def_readonly("mean_loss", &EpochRecord::mean_loss)
        .def_readonly("evaluated", &EpochRecord::evaluated)
        .def_readonly("val_auc", &EpochRecord::val_auc)
        .def_readonly("val_best_hm", &EpochRecord::val_best_hm)
        .def_readonly("is_best", &EpochRecord::is_best);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_property_readonly("kind", &Checkpoint::kind)
        .def_readonly("feasibility", &Checkpoint::feasibility)
        .def_readonly("best_epoch", &Checkpoint::best_epoch);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("log", &TrainResult::log)
        .def_readonly("best_epoch", &TrainResult::best_epoch)
        .def_readonly("best_val_auc", &TrainResult::best_val_auc)
        .def_readonly("feasibility", &TrainResult::feasibility)
        .def("checkpoint", [](const TrainResult& r, const TrainConfig& cfg) {
            return Checkpoint{r.model, r.feasibility, cfg, r.best_epoch};
        });

    m.def("synthesize", &synthesize, py::arg("spec"), "seeded synthetic dataset");
    m.def("load_dataset", &dataset_from_dir, py::arg("dir"));
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("dir"));
    m.def("build_graph", &build_graph, py::arg("vocab"), py::arg("embeddings"), py::arg("mode"));
    m.def(
        "build_graph_for",
        [](const Dataset& ds, WorldMode mode) { return build_graph(ds.vocab, ds.embeddings, mode); },
        py::arg("dataset"), py::arg("mode"));
    m.def("alpha_at", &alpha_at, py::arg("epoch"), py::arg("config"));
    m.def("compatibility", &compatibility, py::arg("z"), py::arg("phi"));
    m.def(
        "train",
        [](const Dataset& ds, const TrainConfig& cfg) {
            py::gil_scoped_release release;
            return train(ds, cfg);
        },
        py::arg("dataset"), py::arg("config"));
    m.def(
        "train_visual_product",
        [](const Dataset& ds, const TrainConfig& cfg) {
            py::gil_scoped_release release;
            return train_visual_product(ds, cfg);
        },
        py::arg("dataset"), py::arg("config"));
    m.def(
        "train_word_avg",
        [](const Dataset& ds, const TrainConfig& cfg) {
            py::gil_scoped_release release;
            return train_word_avg(ds, cfg);
        },
        py::arg("dataset"), py::arg("config"));
    m.def("save_checkpoint", &save_model_checkpoint, py::arg("path"), py::arg("checkpoint"));
    m.def("load_checkpoint", &load_model_checkpoint, py::arg("path"));
    m.def(
        "evaluate",
        [](const Checkpoint& ckpt, const Dataset& ds, const std::string& split,
           WorldMode eval_mode, std::optional<double> hard_tau) {
            const auto& samples = split == "train" ? ds.train : split == "val" ? ds.val : ds.test;
            return evaluate_checkpoint(ckpt, ds, samples, eval_mode, hard_tau);
        },
        py::arg("checkpoint"), py::arg("dataset"), py::arg("split"), py::arg("eval_mode"),
        py::arg("hard_tau") = std::nullopt);
    m.def("select_tau", &select_tau_checkpoint, py::arg("checkpoint"), py::arg("dataset"),
          py::arg("eval_mode"));
    m.def("initial_feasibility", &initial_feasibility, py::arg("dataset"), py::arg("config"));
    m.def("metrics_log_json", &metrics_log_json, py::arg("log"));

    m.attr("__version__") = kToolVersion;
}
