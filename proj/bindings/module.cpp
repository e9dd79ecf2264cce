// Python surface over the core: dataset handling, metapath extraction, the
// instance encoders, scheduling/metric helpers, and train/evaluate.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hanme/encoders.hpp"
#include "hanme/error.hpp"
#include "hanme/graph.hpp"
#include "hanme/metapath.hpp"
#include "hanme/metrics.hpp"
#include "hanme/synthetic.hpp"
#include "hanme/trainer.hpp"

namespace py = pybind11;
using namespace hanme;

namespace {

Tensor tensor_from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows[0].size() : 0;
  Tensor t({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    if (rows[i].size() != c) throw DimensionError("ragged row lengths");
    for (std::size_t j = 0; j < c; ++j) t.at(i, j) = rows[i][j];
  }
  return t;
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) out[i][j] = t.at(i, j);
  }
  return out;
}

MultihopParams make_multihop(const std::vector<std::vector<double>>& w_h,
                             const std::vector<std::vector<double>>& w_t,
                             const std::vector<double>& v_a, double gamma, double slope) {
  MultihopParams p;
  p.w_h = tensor_from_rows(w_h);
  p.w_t = tensor_from_rows(w_t);
  p.v_a = Tensor({v_a.size(), 1});
  for (std::size_t i = 0; i < v_a.size(); ++i) p.v_a[i] = v_a[i];
  p.gamma = gamma;
  p.leaky_slope = slope;
  return p;
}

DirectParams make_direct(const std::vector<std::vector<double>>& w_t,
                         const std::vector<std::vector<double>>& w_h) {
  DirectParams p;
  p.w_t = tensor_from_rows(w_t);
  p.w_h = tensor_from_rows(w_h);
  return p;
}

py::dict result_dict(const TrainResult& r) {
  py::dict d;
  d["best_epoch"] = r.best_epoch;
  d["best_val_micro_f1"] = r.best_val_micro;
  d["best_val_macro_f1"] = r.best_val_macro;
  d["test_micro_f1"] = r.test_micro;
  d["test_macro_f1"] = r.test_macro;
  d["epochs_run"] = r.epochs_run;
  d["checkpoint"] = r.checkpoint_path;
  d["history"] = r.history_path;
  d["metrics"] = r.metrics_path;
  py::dict betas;
  for (std::size_t i = 0; i < r.metapath_names.size(); ++i) {
    betas[py::str(r.metapath_names[i])] = r.semantic_betas[i];
  }
  d["semantic_betas"] = betas;
  py::dict fb;
  for (const auto& [name, count] : r.fallback_counts) fb[py::str(name)] = count;
  d["fallback_nodes"] = fb;
  return d;
}

}  // namespace

PYBIND11_MODULE(_hanme, m) {
  m.doc() = "Heterogeneous-graph node classification with full metapath-instance encoders";
  m.attr("__version__") = "0.1.0";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);

  py::class_<HeteroGraph>(m, "HeteroGraph")
      .def_readonly("node_types", &HeteroGraph::node_types)
      .def_readonly("labeled_type", &HeteroGraph::labeled_type)
      .def_readonly("num_classes", &HeteroGraph::num_classes)
      .def_readonly("train_ids", &HeteroGraph::train_ids)
      .def_readonly("val_ids", &HeteroGraph::val_ids)
      .def_readonly("test_ids", &HeteroGraph::test_ids)
      .def("node_count", &HeteroGraph::count)
      .def("feature_dim", &HeteroGraph::feature_dim)
      .def("features",
           [](const HeteroGraph& g, const std::string& t) { return rows_of(g.features.at(t)); })
      .def("labels", [](const HeteroGraph& g) { return rows_of(g.labels); });

  py::class_<InstanceTable>(m, "InstanceTable")
      .def_readonly("num_sources", &InstanceTable::num_sources)
      .def_property_readonly("schema_name",
                             [](const InstanceTable& t) { return t.schema.name; })
      .def_property_readonly("num_instances",
                             [](const InstanceTable& t) { return t.num_instances(); })
      .def("count_for", &InstanceTable::count_for)
      .def("instances",
           [](const InstanceTable& t, NodeId v) {
             std::vector<std::vector<NodeId>> out;
             for (std::int64_t r = t.offsets[v]; r < t.offsets[v + 1]; ++r) {
               auto row = t.instance(r);
               out.emplace_back(row.begin(), row.end());
             }
             return out;
           })
      .def("neighbors",
           [](const InstanceTable& t, NodeId v) { return metapath_neighbors(t, v); });

  m.def(
      "gen_synthetic",
      [](const std::string& config_json, const std::string& out_dir) {
        gen_synthetic(SyntheticConfig::from_json(config_json), out_dir);
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Write a planted-community synthetic dataset (byte-identical per seed).");
  m.def("load_graph", &load_graph, py::arg("dataset_dir"));
  m.def("save_graph", &save_graph, py::arg("graph"), py::arg("dataset_dir"));
  m.def("assign_pooled_features", &assign_pooled_features, py::arg("graph"),
        py::arg("target_types"),
        "Mean-pool 1-hop featured-neighbor rows onto each target type.");

  m.def(
      "enumerate_instances",
      [](const HeteroGraph& g, const std::vector<std::string>& type_list,
         std::size_t max_per_source) {
        return enumerate_instances(g, resolve_schema(g, type_list), max_per_source);
      },
      py::arg("graph"), py::arg("type_list"), py::arg("max_per_source") = 0);

  // Per-instance encoders; features are k+1 rows of the shared projected width.
  m.def(
      "one_hop_scores",
      [](const InstanceFeatures& feats, const std::vector<std::vector<double>>& w_h,
         const std::vector<std::vector<double>>& w_t, const std::vector<double>& v_a,
         double gamma, double slope) {
        return one_hop_scores(feats, make_multihop(w_h, w_t, v_a, gamma, slope)).a;
      },
      py::arg("features"), py::arg("w_h"), py::arg("w_t"), py::arg("v_a"),
      py::arg("gamma") = 0.4, py::arg("leaky_slope") = 0.2);
  m.def(
      "multihop_encode",
      [](const InstanceFeatures& feats, const std::vector<std::vector<double>>& w_h,
         const std::vector<std::vector<double>>& w_t, const std::vector<double>& v_a,
         double gamma, double slope) {
        return multihop_encode(feats, make_multihop(w_h, w_t, v_a, gamma, slope));
      },
      py::arg("features"), py::arg("w_h"), py::arg("w_t"), py::arg("v_a"),
      py::arg("gamma") = 0.4, py::arg("leaky_slope") = 0.2);
  m.def(
      "diffusion_series_encode",
      [](const InstanceFeatures& feats, const std::vector<std::vector<double>>& w_h,
         const std::vector<std::vector<double>>& w_t, const std::vector<double>& v_a,
         double gamma, double slope) {
        return diffusion_series_encode(feats, make_multihop(w_h, w_t, v_a, gamma, slope));
      },
      py::arg("features"), py::arg("w_h"), py::arg("w_t"), py::arg("v_a"),
      py::arg("gamma") = 0.4, py::arg("leaky_slope") = 0.2,
      "Explicit truncated power-series route; reference check for multihop_encode.");
  m.def(
      "direct_encode",
      [](const InstanceFeatures& feats, const std::vector<std::vector<double>>& w_t,
         const std::vector<std::vector<double>>& w_h) {
        return direct_encode(feats, make_direct(w_t, w_h));
      },
      py::arg("features"), py::arg("w_t"), py::arg("w_h"));

  m.def(
      "pacing",
      [](const std::string& kind, double lambda0, std::int64_t full_epoch, std::int64_t t) {
        return pacing({pacing_kind_from_string(kind), lambda0, full_epoch}, t);
      },
      py::arg("kind"), py::arg("lambda0"), py::arg("full_epoch"), py::arg("t"));
  m.def("select_nodes_lts", &select_nodes_lts, py::arg("losses"), py::arg("train_ids"),
        py::arg("lambda_t"));
  m.def(
      "f1_scores",
      [](const std::vector<std::vector<double>>& logits,
         const std::vector<std::vector<double>>& labels, double threshold) {
        F1 f = f1_scores(tensor_from_rows(logits), tensor_from_rows(labels), threshold);
        return py::make_tuple(f.micro, f.macro);
      },
      py::arg("logits"), py::arg("labels"), py::arg("threshold") = 0.5);

  py::class_<TrainOptions>(m, "TrainOptions")
      .def(py::init<>())
      .def_readwrite("metapaths", &TrainOptions::metapaths)
      .def_property(
          "encoder", [](const TrainOptions& o) { return to_string(o.encoder); },
          [](TrainOptions& o, const std::string& s) { o.encoder = encoder_kind_from_string(s); })
      .def_readwrite("gamma", &TrainOptions::gamma)
      .def_readwrite("leaky_slope", &TrainOptions::leaky_slope)
      .def_readwrite("heads", &TrainOptions::heads)
      .def_readwrite("hidden", &TrainOptions::hidden)
      .def_readwrite("semantic_hidden", &TrainOptions::semantic_hidden)
      .def_readwrite("lr", &TrainOptions::lr)
      .def_readwrite("weight_decay", &TrainOptions::weight_decay)
      .def_readwrite("dropout", &TrainOptions::dropout)
      .def_readwrite("patience", &TrainOptions::patience)
      .def_readwrite("max_epochs", &TrainOptions::max_epochs)
      .def_readwrite("seed", &TrainOptions::seed)
      .def_readwrite("threshold", &TrainOptions::threshold)
      .def_readwrite("max_instances_per_source", &TrainOptions::max_instances_per_source)
      .def_property(
          "lts", [](const TrainOptions& o) { return to_string(o.pacing.kind); },
          [](TrainOptions& o, const std::string& s) {
            o.pacing.kind = pacing_kind_from_string(s);
          })
      .def_property(
          "lambda0", [](const TrainOptions& o) { return o.pacing.lambda0; },
          [](TrainOptions& o, double v) { o.pacing.lambda0 = v; })
      .def_property(
          "pace_T", [](const TrainOptions& o) { return o.pacing.full_epoch; },
          [](TrainOptions& o, std::int64_t v) { o.pacing.full_epoch = v; });

  m.def(
      "train",
      [](const TrainOptions& opt, const std::string& data_dir, const std::string& out_dir) {
        return result_dict(train(opt, data_dir, out_dir));
      },
      py::arg("options"), py::arg("data_dir"), py::arg("out_dir"));
  m.def(
      "evaluate",
      [](const std::string& ckpt, const std::string& data_dir, const std::string& split) {
        EvalResult r = evaluate(ckpt, data_dir, split);
        py::dict d;
        d["split"] = r.split;
        d["micro_f1"] = r.micro;
        d["macro_f1"] = r.macro;
        return d;
      },
      py::arg("checkpoint"), py::arg("data_dir"), py::arg("split"));
}
