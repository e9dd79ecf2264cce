#include "hanme/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "hanme/adam.hpp"
#include "hanme/checkpoint.hpp"
#include "hanme/error.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hanme {

PacingKind pacing_kind_from_string(const std::string& s) {
  if (s == "off") return PacingKind::kOff;
  if (s == "linear") return PacingKind::kLinear;
  if (s == "root") return PacingKind::kRoot;
  if (s == "geometric") return PacingKind::kGeometric;
  throw ConfigError("unknown pacing kind '" + s + "' (want off, linear, root or geometric)");
}

std::string to_string(PacingKind k) {
  switch (k) {
    case PacingKind::kOff: return "off";
    case PacingKind::kLinear: return "linear";
    case PacingKind::kRoot: return "root";
    case PacingKind::kGeometric: return "geometric";
  }
  return "?";
}

double pacing(const PacingConfig& cfg, std::int64_t t) {
  if (cfg.kind == PacingKind::kOff) return 1.0;
  if (cfg.lambda0 <= 0.0 || cfg.lambda0 > 1.0) throw ConfigError("pacing: lambda0 outside (0,1]");
  if (cfg.full_epoch < 1) throw ConfigError("pacing: T must be >= 1");
  if (t < 0) throw ConfigError("pacing: negative epoch");
  if (t >= cfg.full_epoch) return 1.0;
  // All three formulas reduce to lambda0 at t=0; returning it directly keeps
  // the endpoint exact where sqrt/exp2 round-trips could drift an ulp.
  if (t == 0) return cfg.lambda0;
  const double frac = static_cast<double>(t) / static_cast<double>(cfg.full_epoch);
  double v = 1.0;
  switch (cfg.kind) {
    case PacingKind::kLinear:
      v = cfg.lambda0 + (1.0 - cfg.lambda0) * frac;
      break;
    case PacingKind::kRoot:
      v = std::sqrt(cfg.lambda0 * cfg.lambda0 + (1.0 - cfg.lambda0 * cfg.lambda0) * frac);
      break;
    case PacingKind::kGeometric:
      v = std::exp2(std::log2(cfg.lambda0) * (1.0 - frac));
      break;
    case PacingKind::kOff:
      break;
  }
  return std::min(v, 1.0);
}

std::vector<NodeId> select_nodes_lts(const std::vector<double>& losses,
                                     const std::vector<NodeId>& train_ids, double lambda) {
  if (train_ids.empty()) throw ConfigError("select_nodes_lts: empty train set");
  if (losses.size() != train_ids.size()) {
    throw DimensionError("select_nodes_lts: losses must align with train ids");
  }
  const double raw = lambda * static_cast<double>(train_ids.size());
  // Guard against fp noise pushing an exact integer over the next ceiling.
  std::size_t take = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  take = std::min(std::max<std::size_t>(take, 1), train_ids.size());

  std::vector<std::size_t> order(train_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (losses[a] != losses[b]) return losses[a] < losses[b];
    return train_ids[a] < train_ids[b];
  });
  std::vector<NodeId> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(train_ids[order[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

void TrainOptions::validate() const {
  // lr 0 freezes the parameters (the optimizer step is skipped entirely).
  if (lr < 0.0 || weight_decay < 0.0) throw ConfigError("train: lr/weight decay out of range");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("train: dropout must be in [0,1)");
  if (heads < 1 || hidden < 1 || semantic_hidden < 1) throw ConfigError("train: bad widths");
  if (patience < 1 || max_epochs < 1) throw ConfigError("train: patience/max epochs must be >= 1");
  if (threshold <= 0.0 || threshold >= 1.0) throw ConfigError("train: threshold in (0,1)");
  if (gamma <= 0.0 || gamma >= 1.0) throw ConfigError("train: gamma must be in (0,1)");
}

HeteroGraph load_prepared_graph(const std::string& dataset_dir) {
  HeteroGraph g = load_graph(dataset_dir);
  std::vector<std::string> bare;
  for (const auto& t : g.node_types) {
    if (g.feature_dim(t) == 0) bare.push_back(t);
  }
  if (!bare.empty()) assign_pooled_features(g, bare);
  return g;
}

std::vector<InstanceTable> extract_tables(const HeteroGraph& g,
                                          const std::vector<std::vector<std::string>>& metapaths,
                                          std::size_t max_per_source) {
  std::vector<std::vector<std::string>> lists = metapaths;
  if (lists.empty()) {
    // Default: every .labeled - X - labeled. pattern with a direct relation.
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& rel : g.relations_from(g.labeled_type)) {
      if (rel.dst == g.labeled_type) continue;
      if (!seen.insert({rel.rel, rel.dst}).second) continue;
      lists.push_back({g.labeled_type, rel.dst, g.labeled_type});
    }
    if (lists.empty()) throw ConfigError("no 2-hop metapath available from the labeled type");
  }
  std::vector<InstanceTable> tables;
  for (const auto& list : lists) {
    tables.push_back(enumerate_instances(g, resolve_schema(g, list), max_per_source));
  }
  return tables;
}

namespace {

json options_meta(const TrainOptions& opt, const std::vector<InstanceTable>& tables) {
  json meta;
  meta["encoder"] = to_string(opt.encoder);
  meta["gamma"] = opt.gamma;
  meta["leaky_slope"] = opt.leaky_slope;
  meta["heads"] = opt.heads;
  meta["hidden"] = opt.hidden;
  meta["semantic_hidden"] = opt.semantic_hidden;
  meta["dropout"] = opt.dropout;
  meta["seed"] = opt.seed;
  meta["threshold"] = opt.threshold;
  meta["max_instances_per_source"] = opt.max_instances_per_source;
  json paths = json::array();
  for (const auto& t : tables) paths.push_back(t.schema.node_types);
  meta["metapaths"] = paths;
  return meta;
}

ModelConfig model_config_from(const TrainOptions& opt) {
  ModelConfig mc;
  mc.encoder = opt.encoder;
  mc.heads = opt.heads;
  mc.hidden = opt.hidden;
  mc.semantic_hidden = opt.semantic_hidden;
  mc.gamma = opt.gamma;
  mc.leaky_slope = opt.leaky_slope;
  mc.dropout = opt.dropout;
  mc.seed = opt.seed;
  return mc;
}

std::vector<std::pair<std::string, Tensor>> snapshot_params(Tape& tape) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (int p : tape.params()) out.emplace_back(tape.node(p).name, tape.value(p));
  return out;
}

void write_history(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrainingError("cannot write history: " + path);
  out << "epoch,lambda_t,num_selected,train_loss,val_micro_f1,val_macro_f1\n";
  for (const auto& r : history) {
    out << r.epoch << "," << format_double(r.lambda) << "," << r.num_selected << ","
        << format_double(r.train_loss) << "," << format_double(r.val_micro) << ","
        << format_double(r.val_macro) << "\n";
  }
}

void write_metrics(const std::string& path, const TrainResult& res) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrainingError("cannot write metrics: " + path);
  out << "best_epoch " << res.best_epoch << "\n";
  out << "best_val_micro_f1 " << format_double(res.best_val_micro) << "\n";
  out << "best_val_macro_f1 " << format_double(res.best_val_macro) << "\n";
  out << "test_micro_f1 " << format_double(res.test_micro) << "\n";
  out << "test_macro_f1 " << format_double(res.test_macro) << "\n";
  out << "epochs_run " << res.epochs_run << "\n";
  for (const auto& [name, count] : res.fallback_counts) {
    out << "fallback_nodes." << name << " " << count << "\n";
  }
}

}  // namespace

TrainResult train(const TrainOptions& opt, const std::string& dataset_dir,
                  const std::string& out_dir) {
  opt.validate();
  HeteroGraph g = load_prepared_graph(dataset_dir);
  if (g.train_ids.empty() || g.val_ids.empty()) {
    throw ConfigError("train: dataset needs non-empty train and val splits");
  }
  std::vector<InstanceTable> tables =
      extract_tables(g, opt.metapaths, opt.max_instances_per_source);
  HanMeModel model(g, tables, model_config_from(opt));
  AdamState adam = AdamState::init(model.tape());

  const Tensor labels = g.labels;
  TrainResult res;
  for (std::size_t si = 0; si < tables.size(); ++si) {
    res.fallback_counts[tables[si].schema.name] = model.fallback_count(si);
  }

  std::vector<std::pair<std::string, Tensor>> best_params = snapshot_params(model.tape());
  double best_micro = -1.0, best_macro = -1.0;
  int best_epoch = 0;
  int wait = 0;
  const bool lts_on = opt.pacing.kind != PacingKind::kOff;

  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    const double lambda = pacing(opt.pacing, epoch - 1);

    std::vector<NodeId> selected = g.train_ids;
    if (lts_on && lambda < 1.0) {
      // Rank by current-model loss (deterministic eval-mode pass).
      model.set_loss_nodes(g.train_ids);
      model.set_semantic_nodes(g.train_ids);
      model.forward(false);
      const auto& rows = model.per_node_losses();
      std::vector<double> train_losses(g.train_ids.size());
      for (std::size_t i = 0; i < g.train_ids.size(); ++i) {
        train_losses[i] = rows[static_cast<std::size_t>(g.train_ids[i])];
      }
      selected = select_nodes_lts(train_losses, g.train_ids, lambda);
    }

    model.set_loss_nodes(selected);
    model.set_semantic_nodes(g.train_ids);
    const double train_loss = model.forward(true);
    if (!std::isfinite(train_loss)) {
      throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch));
    }
    model.backward();
    if (opt.lr > 0.0) adam_step(model.tape(), adam, opt.lr, opt.weight_decay);

    model.set_loss_nodes(g.val_ids);
    model.set_semantic_nodes(g.val_ids);
    model.forward(false);
    const F1 val = f1_scores(model.logits(), labels, g.val_ids, opt.threshold);

    res.history.push_back({epoch, lambda, selected.size(), train_loss, val.micro, val.macro});

    const bool improved = val.micro > best_micro;
    if (improved || (val.micro == best_micro && val.macro > best_macro)) {
      best_params = snapshot_params(model.tape());
      best_micro = val.micro;
      best_macro = val.macro;
      best_epoch = epoch;
    }
    if (improved) {
      wait = 0;
    } else {
      ++wait;
      if (wait >= opt.patience) break;
    }
  }

  res.best_epoch = best_epoch;
  res.best_val_micro = best_micro;
  res.best_val_macro = best_macro;
  res.epochs_run = static_cast<int>(res.history.size());

  // Restore the best parameters, score the test split, persist artifacts.
  for (const auto& [name, value] : best_params) {
    const int id = model.tape().find(name);
    model.tape().value(id) = value;
  }
  model.set_loss_nodes(g.train_ids);
  model.set_semantic_nodes(g.train_ids);
  model.forward(false);
  res.metapath_names = model.metapath_names();
  res.semantic_betas = model.semantic_weights();

  model.set_loss_nodes(g.test_ids.empty() ? g.val_ids : g.test_ids);
  model.set_semantic_nodes(g.test_ids.empty() ? g.val_ids : g.test_ids);
  model.forward(false);
  const F1 test = f1_scores(model.logits(), labels,
                            g.test_ids.empty() ? g.val_ids : g.test_ids, opt.threshold);
  res.test_micro = test.micro;
  res.test_macro = test.macro;

  fs::create_directories(out_dir);
  Checkpoint ckpt;
  ckpt.meta_json = options_meta(opt, tables).dump();
  ckpt.tensors = best_params;
  res.checkpoint_path = (fs::path(out_dir) / "model.ckpt").string();
  res.history_path = (fs::path(out_dir) / "history.csv").string();
  res.metrics_path = (fs::path(out_dir) / "metrics.txt").string();
  save_checkpoint(res.checkpoint_path, ckpt);
  write_history(res.history_path, res.history);
  write_metrics(res.metrics_path, res);
  return res;
}

EvalResult evaluate(const std::string& checkpoint_path, const std::string& dataset_dir,
                    const std::string& split) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  json meta;
  try {
    meta = json::parse(ckpt.meta_json);
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint meta: " + std::string(e.what()));
  }

  TrainOptions opt;
  try {
    opt.encoder = encoder_kind_from_string(meta.at("encoder").get<std::string>());
    opt.gamma = meta.at("gamma").get<double>();
    opt.leaky_slope = meta.at("leaky_slope").get<double>();
    opt.heads = meta.at("heads").get<int>();
    opt.hidden = meta.at("hidden").get<int>();
    opt.semantic_hidden = meta.at("semantic_hidden").get<int>();
    opt.dropout = meta.at("dropout").get<double>();
    opt.seed = meta.at("seed").get<std::uint64_t>();
    opt.threshold = meta.at("threshold").get<double>();
    opt.max_instances_per_source = meta.at("max_instances_per_source").get<std::size_t>();
    for (const auto& mp : meta.at("metapaths")) {
      opt.metapaths.push_back(mp.get<std::vector<std::string>>());
    }
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint meta: " + std::string(e.what()));
  }

  HeteroGraph g = load_prepared_graph(dataset_dir);
  const std::vector<NodeId>* ids = nullptr;
  if (split == "train") ids = &g.train_ids;
  else if (split == "val") ids = &g.val_ids;
  else if (split == "test") ids = &g.test_ids;
  else throw ConfigError("evaluate: unknown split '" + split + "'");
  if (ids->empty()) throw ConfigError("evaluate: split '" + split + "' is empty");

  std::vector<InstanceTable> tables =
      extract_tables(g, opt.metapaths, opt.max_instances_per_source);
  HanMeModel model(g, tables, model_config_from(opt));

  if (ckpt.tensors.size() != model.tape().params().size()) {
    throw CheckpointError("checkpoint carries " + std::to_string(ckpt.tensors.size()) +
                          " tensors but the model has " +
                          std::to_string(model.tape().params().size()) + " parameters");
  }
  for (const auto& [name, value] : ckpt.tensors) {
    const int id = model.tape().find(name);
    if (id < 0) throw CheckpointError("checkpoint tensor '" + name + "' has no model parameter");
    if (!model.tape().value(id).same_shape(value)) {
      throw CheckpointError("checkpoint tensor '" + name + "' shape mismatch against dataset");
    }
    model.tape().value(id) = value;
  }

  model.set_loss_nodes(*ids);
  model.set_semantic_nodes(*ids);
  model.forward(false);
  const F1 f1 = f1_scores(model.logits(), g.labels, *ids, opt.threshold);
  return EvalResult{split, f1.micro, f1.macro};
}

}  // namespace hanme
