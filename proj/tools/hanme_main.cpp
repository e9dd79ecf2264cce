// Command-line front end: dataset generation, metapath extraction stats,
// training, evaluation, and the verification suite.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hanme/error.hpp"
#include "hanme/metapath.hpp"
#include "hanme/synthetic.hpp"
#include "hanme/tensor.hpp"
#include "hanme/trainer.hpp"
#include "hanme/verify.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_types(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hanme::ConfigError("cannot read config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TrainCli {
  std::string data, out, config;
  std::string encoder = "multihop";
  std::string lts = "off";
  double gamma = 0.4, leaky_slope = 0.2, lambda0 = 0.1;
  std::int64_t pace_t = 100;
  std::uint64_t seed = 483;
  int heads = 8, hidden = 128, semantic_hidden = 128;
  double lr = 0.005, weight_decay = 0.001, dropout = 0.6, threshold = 0.5;
  int patience = 100, max_epochs = 1000;
  std::size_t max_instances = 0;
  bool strict = false;
  std::vector<std::string> metapaths;
};

// Config file first, then any flag the user actually passed wins.
hanme::TrainOptions build_train_options(const TrainCli& cli, const CLI::App* cmd) {
  hanme::TrainOptions opt;
  if (!cli.config.empty()) {
    json j;
    try {
      j = json::parse(read_file(cli.config));
    } catch (const json::exception& e) {
      throw hanme::ConfigError("run config: " + std::string(e.what()));
    }
    try {
      if (j.contains("encoder")) opt.encoder = hanme::encoder_kind_from_string(j["encoder"]);
      if (j.contains("gamma")) opt.gamma = j["gamma"].get<double>();
      if (j.contains("leaky_slope")) opt.leaky_slope = j["leaky_slope"].get<double>();
      if (j.contains("lts")) opt.pacing.kind = hanme::pacing_kind_from_string(j["lts"]);
      if (j.contains("lambda0")) opt.pacing.lambda0 = j["lambda0"].get<double>();
      if (j.contains("pace_T")) opt.pacing.full_epoch = j["pace_T"].get<std::int64_t>();
      if (j.contains("seed")) opt.seed = j["seed"].get<std::uint64_t>();
      if (j.contains("heads")) opt.heads = j["heads"].get<int>();
      if (j.contains("hidden")) opt.hidden = j["hidden"].get<int>();
      if (j.contains("semantic_hidden")) opt.semantic_hidden = j["semantic_hidden"].get<int>();
      if (j.contains("lr")) opt.lr = j["lr"].get<double>();
      if (j.contains("weight_decay")) opt.weight_decay = j["weight_decay"].get<double>();
      if (j.contains("dropout")) opt.dropout = j["dropout"].get<double>();
      if (j.contains("threshold")) opt.threshold = j["threshold"].get<double>();
      if (j.contains("patience")) opt.patience = j["patience"].get<int>();
      if (j.contains("max_epochs")) opt.max_epochs = j["max_epochs"].get<int>();
      if (j.contains("max_instances")) {
        opt.max_instances_per_source = j["max_instances"].get<std::size_t>();
      }
      if (j.contains("metapaths")) {
        for (const auto& mp : j["metapaths"]) {
          opt.metapaths.push_back(mp.get<std::vector<std::string>>());
        }
      }
    } catch (const json::exception& e) {
      throw hanme::ConfigError("run config: " + std::string(e.what()));
    }
  }
  auto override_if = [&](const char* flag, auto setter) {
    if (cmd->count(flag)) setter();
  };
  override_if("--encoder", [&] { opt.encoder = hanme::encoder_kind_from_string(cli.encoder); });
  override_if("--gamma", [&] { opt.gamma = cli.gamma; });
  override_if("--leaky-slope", [&] { opt.leaky_slope = cli.leaky_slope; });
  override_if("--lts", [&] { opt.pacing.kind = hanme::pacing_kind_from_string(cli.lts); });
  override_if("--lambda0", [&] { opt.pacing.lambda0 = cli.lambda0; });
  override_if("--pace-T", [&] { opt.pacing.full_epoch = cli.pace_t; });
  override_if("--seed", [&] { opt.seed = cli.seed; });
  override_if("--heads", [&] { opt.heads = cli.heads; });
  override_if("--hidden", [&] { opt.hidden = cli.hidden; });
  override_if("--semantic-hidden", [&] { opt.semantic_hidden = cli.semantic_hidden; });
  override_if("--lr", [&] { opt.lr = cli.lr; });
  override_if("--weight-decay", [&] { opt.weight_decay = cli.weight_decay; });
  override_if("--dropout", [&] { opt.dropout = cli.dropout; });
  override_if("--threshold", [&] { opt.threshold = cli.threshold; });
  override_if("--patience", [&] { opt.patience = cli.patience; });
  override_if("--max-epochs", [&] { opt.max_epochs = cli.max_epochs; });
  override_if("--max-instances", [&] { opt.max_instances_per_source = cli.max_instances; });
  override_if("--strict", [&] { opt.strict = cli.strict; });
  if (!cli.metapaths.empty()) {
    opt.metapaths.clear();
    for (const auto& mp : cli.metapaths) opt.metapaths.push_back(split_types(mp));
  }
  return opt;
}

int run_gen_synth(const std::string& config_path, const std::string& out) {
  hanme::SyntheticConfig cfg = hanme::SyntheticConfig::from_json(read_file(config_path));
  hanme::gen_synthetic(cfg, out);
  std::printf("wrote dataset to %s\n", out.c_str());
  return 0;
}

int run_extract(const std::string& data, const std::vector<std::string>& metapaths,
                std::size_t max_instances) {
  hanme::HeteroGraph g = hanme::load_prepared_graph(data);
  std::vector<std::vector<std::string>> lists;
  for (const auto& mp : metapaths) lists.push_back(split_types(mp));
  auto tables = hanme::extract_tables(g, lists, max_instances);
  for (const auto& table : tables) {
    std::int64_t with = 0, mn = -1, mx = 0;
    for (hanme::NodeId v = 0; v < table.num_sources; ++v) {
      const std::int64_t c = table.count_for(v);
      if (c > 0) ++with;
      if (mn < 0 || c < mn) mn = c;
      mx = std::max(mx, c);
    }
    const double mean = table.num_sources
                            ? static_cast<double>(table.num_instances()) /
                                  static_cast<double>(table.num_sources)
                            : 0.0;
    std::printf("%s: instances=%lld sources_with_instances=%lld/%lld per_source_min=%lld "
                "per_source_mean=%.3f per_source_max=%lld\n",
                table.schema.name.c_str(), static_cast<long long>(table.num_instances()),
                static_cast<long long>(with), static_cast<long long>(table.num_sources),
                static_cast<long long>(mn < 0 ? 0 : mn), mean, static_cast<long long>(mx));
  }
  return 0;
}

int run_train(const TrainCli& cli, const CLI::App* cmd) {
  hanme::TrainOptions opt = build_train_options(cli, cmd);
  hanme::TrainResult res = hanme::train(opt, cli.data, cli.out);
  std::printf("epochs_run %d\n", res.epochs_run);
  std::printf("best_epoch %d\n", res.best_epoch);
  std::printf("best_val_micro_f1 %s\n", hanme::format_double(res.best_val_micro).c_str());
  std::printf("best_val_macro_f1 %s\n", hanme::format_double(res.best_val_macro).c_str());
  std::printf("test_micro_f1 %s\n", hanme::format_double(res.test_micro).c_str());
  std::printf("test_macro_f1 %s\n", hanme::format_double(res.test_macro).c_str());
  for (std::size_t i = 0; i < res.metapath_names.size(); ++i) {
    std::printf("beta.%s %s\n", res.metapath_names[i].c_str(),
                hanme::format_double(res.semantic_betas[i]).c_str());
  }
  for (const auto& [name, count] : res.fallback_counts) {
    std::printf("fallback_nodes.%s %zu\n", name.c_str(), count);
  }
  std::printf("checkpoint %s\n", res.checkpoint_path.c_str());
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& split,
             const std::string& out) {
  hanme::EvalResult res = hanme::evaluate(ckpt, data, split);
  std::ostringstream doc;
  doc << "split " << res.split << "\n";
  doc << "micro_f1 " << hanme::format_double(res.micro) << "\n";
  doc << "macro_f1 " << hanme::format_double(res.macro) << "\n";
  std::fputs(doc.str().c_str(), stdout);
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw hanme::TrainingError("cannot write metrics: " + out);
    f << doc.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hanme: heterogeneous-graph node classification with full "
               "metapath-instance encoders"};
  app.require_subcommand(1);

  // gen-synth
  std::string synth_config, synth_out;
  auto* gen = app.add_subcommand("gen-synth", "generate a planted synthetic dataset");
  gen->add_option("--config", synth_config, "synthetic config JSON")->required();
  gen->add_option("--out", synth_out, "output dataset directory")->required();

  // extract
  std::string ex_data;
  std::vector<std::string> ex_metapaths;
  std::size_t ex_max_instances = 0;
  auto* ex = app.add_subcommand("extract", "enumerate metapath instances and print stats");
  ex->add_option("--data", ex_data, "dataset directory")->required();
  ex->add_option("--metapath", ex_metapaths,
                 "comma-separated type list, e.g. movie,director,movie (repeatable)");
  ex->add_option("--max-instances", ex_max_instances, "cap per source node (0 = unlimited)");

  // train
  TrainCli tc;
  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--data", tc.data, "dataset directory")->required();
  tr->add_option("--out", tc.out, "output run directory")->required();
  tr->add_option("--config", tc.config, "run config JSON (flags win)");
  tr->add_option("--encoder", tc.encoder, "multihop|direct|terminal-only");
  tr->add_option("--gamma", tc.gamma, "teleport rate of the multihop encoder");
  tr->add_option("--leaky-slope", tc.leaky_slope, "LeakyReLU slope");
  tr->add_option("--lts", tc.lts, "off|linear|root|geometric");
  tr->add_option("--lambda0", tc.lambda0, "initial included fraction");
  tr->add_option("--pace-T", tc.pace_t, "epoch at which all nodes are included");
  tr->add_option("--seed", tc.seed, "run seed");
  tr->add_option("--heads", tc.heads, "attention heads");
  tr->add_option("--hidden", tc.hidden, "hidden width per head");
  tr->add_option("--semantic-hidden", tc.semantic_hidden, "semantic attention width");
  tr->add_option("--lr", tc.lr, "learning rate");
  tr->add_option("--weight-decay", tc.weight_decay, "decoupled weight decay");
  tr->add_option("--dropout", tc.dropout, "dropout rate");
  tr->add_option("--threshold", tc.threshold, "prediction threshold");
  tr->add_option("--patience", tc.patience, "early-stopping patience");
  tr->add_option("--max-epochs", tc.max_epochs, "epoch cap");
  tr->add_option("--metapath", tc.metapaths, "comma-separated type list (repeatable)");
  tr->add_option("--max-instances", tc.max_instances, "cap per source node (0 = unlimited)");
  tr->add_flag("--strict", tc.strict,
               "sequential deterministic execution (always on; flag kept for interface)");

  // eval
  std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train|val|test");
  ev->add_option("--out", ev_out, "also write the metrics document here");

  // verify
  std::string vf_data;
  auto* vf = app.add_subcommand("verify", "run the oracle/invariant suite");
  vf->add_option("--data", vf_data, "optional IMDB-format dataset for the reproduction check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return 1;
  }

  try {
    if (gen->parsed()) return run_gen_synth(synth_config, synth_out);
    if (ex->parsed()) return run_extract(ex_data, ex_metapaths, ex_max_instances);
    if (tr->parsed()) return run_train(tc, tr);
    if (ev->parsed()) return run_eval(ev_ckpt, ev_data, ev_split, ev_out);
    if (vf->parsed()) {
      hanme::verify::Options opt;
      opt.imdb_dir = vf_data;
      return hanme::verify::report(hanme::verify::run_all(opt)) == 0 ? 0 : 1;
    }
  } catch (const hanme::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const hanme::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const hanme::IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const hanme::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
