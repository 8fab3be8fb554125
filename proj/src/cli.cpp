// SPDX-License-Identifier: Apache-2.0
#include "gode/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gode/datapipe.hpp"
#include "gode/error.hpp"
#include "gode/eval.hpp"
#include "gode/graph.hpp"
#include "gode/kernels.hpp"
#include "gode/postconv.hpp"
#include "gode/study.hpp"
#include "gode/trainer.hpp"

namespace gode::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// Splits "20,50" style lists.
template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) {
      throw Error(ErrorCode::InvalidArgument, "cannot parse list element '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw Error(ErrorCode::Io, std::string(what) + " not found: " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + p.string());
}

fs::path sidecar_path(const fs::path& checkpoint) {
  return fs::path(checkpoint.string() + ".json");
}

void write_sidecar(const fs::path& checkpoint, const json& meta) {
  write_text(sidecar_path(checkpoint), meta.dump(2) + "\n");
}

Flavor read_flavor(const fs::path& checkpoint) {
  std::ifstream in(sidecar_path(checkpoint));
  if (!in) return Flavor::Initial;
  try {
    const auto meta = json::parse(in);
    return meta.value("flavor", "initial") == "convolved" ? Flavor::Convolved : Flavor::Initial;
  } catch (const json::exception&) {
    throw Error(ErrorCode::MalformedLine, "unreadable sidecar " + sidecar_path(checkpoint).string());
  }
}

std::string format_stats(const datapipe::DatasetStats& s) {
  std::ostringstream os;
  os << "users=" << s.n_users << " items=" << s.n_items << " interactions=" << s.n_interactions
     << " sparsity=" << std::fixed << std::setprecision(4) << 100.0 * s.sparsity << '%';
  return os.str();
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite:
    case ErrorCode::ZeroNorm:
    case ErrorCode::IsolatedNode:
      return kInternal;
    default:
      return kUsage;
  }
}

// ---------------------------------------------------------------------------
// Shared option groups

struct TrainOpts {
  std::string mode = "mf";
  std::string uniformity =
      train::kDefaultUniformity == kernels::UniformityKernel::Distance ? "distance" : "squared";
  train::TrainConfig cfg;
  bool self_loop = false;
};

void add_train_options(CLI::App* app, TrainOpts& o) {
  app->add_option("--mode", o.mode, "training paradigm")->check(CLI::IsMember({"mf", "gcn"}));
  app->add_option("--gamma", o.cfg.gamma, "uniformity weight");
  app->add_option("--lr", o.cfg.lr, "Adam learning rate");
  app->add_option("--batch", o.cfg.batch_size, "pairs per batch");
  app->add_option("--dim", o.cfg.dim, "embedding dimension");
  app->add_option("--patience", o.cfg.patience, "early-stopping patience in epochs");
  app->add_option("--max-epochs", o.cfg.max_epochs, "epoch budget");
  app->add_option("--seed", o.cfg.seed, "random seed");
  app->add_option("--train-K", o.cfg.gcn_layers, "layers used inside gcn-mode training");
  app->add_option("--train-self-loop", o.self_loop, "self-loop inside gcn-mode training");
  app->add_option("--uniformity", o.uniformity, "uniformity kernel exp(-2|x-y|) or exp(-2|x-y|^2)")
      ->check(CLI::IsMember({"distance", "squared"}));
}

train::TrainConfig finish(const TrainOpts& o) {
  auto cfg = o.cfg;
  cfg.mode = o.mode == "gcn" ? train::TrainMode::Gcn : train::TrainMode::Mf;
  cfg.gcn_self_loop = o.self_loop;
  cfg.uniformity = o.uniformity == "squared" ? kernels::UniformityKernel::SquaredDistance
                                             : kernels::UniformityKernel::Distance;
  train::validate(cfg);
  return cfg;
}

struct ConvOpts {
  std::string conv = "ode";
  int K = 2;
  double t = 1.0;
  double dt = 0.1;
  std::string readout = "layer_sum";
};

void add_conv_options(CLI::App* app, ConvOpts& o) {
  app->add_option("--conv", o.conv, "post-training convolution")
      ->check(CLI::IsMember({"discrete", "discrete_sl", "ode"}));
  app->add_option("--K", o.K, "layers for discrete convolution");
  app->add_option("--t", o.t, "ODE horizon");
  app->add_option("--dt", o.dt, "Euler step");
  app->add_option("--readout", o.readout, "discrete readout")
      ->check(CLI::IsMember({"layer_sum", "last_layer"}));
}

postconv::ConvConfig finish(const ConvOpts& o) {
  postconv::ConvConfig c;
  c.mode = postconv::parse_conv_mode(o.conv);
  c.K = o.K;
  c.t = o.t;
  c.dt = o.dt;
  c.readout = postconv::parse_readout(o.readout);
  if (c.K < 0) throw Error(ErrorCode::InvalidArgument, "--K must be >= 0");
  if (!(c.t >= 0.0)) throw Error(ErrorCode::InvalidArgument, "--t must be >= 0");
  if (!(c.dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "--dt must be > 0");
  return c;
}

json conv_meta(const postconv::ConvConfig& c) {
  json j{{"flavor", "convolved"}, {"mode", postconv::to_string(c.mode)}};
  if (c.mode == postconv::ConvMode::Ode) {
    j["t"] = c.t;
    j["dt"] = c.dt;
  } else {
    j["K"] = c.K;
    j["readout"] = postconv::to_string(c.readout);
  }
  return j;
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  auto ks = parse_list<std::size_t>(text);
  if (ks.empty()) throw Error(ErrorCode::InvalidArgument, "--ks needs at least one value");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() == 0) throw Error(ErrorCode::InvalidArgument, "K values must be positive");
  return ks;
}

eval::Split parse_split(const std::string& s) {
  return s == "valid" ? eval::Split::Valid : eval::Split::Test;
}

// ---------------------------------------------------------------------------
// Commands

struct Options {
  // synth
  datapipe::SynthConfig synth;
  // prepare
  std::string raw;
  std::uint32_t k_core = 5;
  std::string ratios = "0.8,0.1,0.1";
  std::uint64_t seed = 2024;
  // common
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::string config;
  std::string ks = "20,50";
  std::string split = "test";
  // sweep
  std::string grid = "t";
  std::string values;
  // bench
  std::size_t epochs = 5;
  TrainOpts train;
  ConvOpts conv;
};

int cmd_synth(const Options& o, std::ostream& out) {
  const auto table = datapipe::synthesize(o.synth);
  datapipe::save_interactions(table, o.out);
  out << "wrote " << table.size() << " interactions to " << o.out << '\n';
  return kOk;
}

int cmd_prepare(const Options& o, std::ostream& out) {
  require_file(o.raw, "raw interaction file");
  const auto ratios = parse_list<double>(o.ratios);
  if (ratios.size() != 3) throw Error(ErrorCode::InvalidArgument, "--ratios needs three values");
  const auto table = datapipe::load_interactions(o.raw);
  const auto filtered = datapipe::k_core_filter(table, o.k_core);
  const auto ds = datapipe::split(filtered, {ratios[0], ratios[1], ratios[2]}, o.seed);
  datapipe::save_dataset(ds, o.out);
  const auto line = format_stats(datapipe::stats(ds));
  write_text(fs::path(o.out) / "stats.txt", line + "\n");
  out << line << '\n';
  return kOk;
}

datapipe::Dataset load_dataset_checked(const std::string& dir) {
  require_file(fs::path(dir) / "id_map.jsonl", "dataset");
  return datapipe::load_dataset(dir);
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto cfg = finish(o.train);
  const auto ds = load_dataset_checked(o.dataset);
  const auto result = train::fit(ds, cfg, [&](const train::EpochRecord& r) {
    out << "epoch " << r.epoch << " loss=" << r.loss << " ndcg@20=" << r.valid_ndcg20 << '\n';
  });
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const auto ckpt = dir / "embeddings.gode";
  datapipe::save_checkpoint(result.embeddings, ckpt);
  write_sidecar(ckpt, json{{"flavor", "initial"},
                           {"train_mode", o.train.mode},
                           {"gamma", cfg.gamma},
                           {"dim", cfg.dim},
                           {"seed", cfg.seed},
                           {"best_epoch", result.log.best_epoch}});
  write_text(dir / "training_log.csv", result.log.to_csv());
  std::ostringstream summary;
  summary << "seconds_per_epoch,epochs,total_seconds,best_epoch\n"
          << result.log.mean_epoch_seconds() << ',' << result.log.epochs.size() << ','
          << result.log.total_seconds() << ',' << result.log.best_epoch << '\n';
  write_text(dir / "train_summary.csv", summary.str());
  out << "best epoch " << result.log.best_epoch << " of " << result.log.epochs.size() << ", "
      << result.log.mean_epoch_seconds() << " s/epoch\n";
  return kOk;
}

int cmd_convolve(const Options& o, std::ostream& out) {
  const auto conv = finish(o.conv);
  const auto ds = load_dataset_checked(o.dataset);
  require_file(o.checkpoint, "checkpoint");
  const auto base = datapipe::load_checkpoint(o.checkpoint, ds.n_users, ds.n_items);
  const auto g = graph::build_graph(ds);
  const auto result = postconv::convolve(g, base, conv);
  datapipe::save_checkpoint(result, o.out);
  write_sidecar(o.out, conv_meta(conv));
  out << "discrepancy=" << postconv::embedding_discrepancy(base, result) << '\n';
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto ks = parse_ks(o.ks);
  const auto ds = load_dataset_checked(o.dataset);
  require_file(o.checkpoint, "checkpoint");
  auto emb = datapipe::load_checkpoint(o.checkpoint, ds.n_users, ds.n_items);
  emb.flavor = read_flavor(o.checkpoint);
  const auto report = eval::evaluate(ds, emb, ks, parse_split(o.split));
  out << eval::format_report(report);
  if (!o.out.empty()) {
    std::ostringstream csv;
    csv << eval::report_csv_header(ks) << ",n_users\n"
        << eval::report_csv_row(report) << ',' << report.n_users_evaluated << '\n';
    write_text(fs::path(o.out) / ("metrics_" + o.split + ".csv"), csv.str());
  }
  return kOk;
}

std::vector<double> default_grid(const std::string& grid) {
  if (grid == "t") return {0.5, 0.8, 1.0, 1.2, 1.5, 1.8, 2.0, 2.2, 2.5, 3.0, 3.5, 5.0};
  if (grid == "gamma") return {0.2, 0.5, 1, 2, 5, 10, 15, 20};
  return {0, 1, 2, 3, 4, 5, 6};
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const auto ks = parse_ks(o.ks);
  const auto grid = o.values.empty() ? default_grid(o.grid) : parse_list<double>(o.values);
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty sweep grid");
  const auto ds = load_dataset_checked(o.dataset);
  auto conv = finish(o.conv);
  const auto split = parse_split(o.split);

  std::vector<eval::SweepRow> rows;
  if (o.grid == "gamma") {
    rows = eval::sweep_gamma(ds, finish(o.train), conv, grid, ks, split);
  } else {
    require_file(o.checkpoint, "checkpoint");
    const auto base = datapipe::load_checkpoint(o.checkpoint, ds.n_users, ds.n_items);
    if (o.grid == "t") {
      conv.mode = postconv::ConvMode::Ode;
    } else if (conv.mode == postconv::ConvMode::Ode) {
      conv.mode = postconv::ConvMode::Discrete;
    }
    rows = eval::sweep_convolution(ds, base, conv, grid, ks, split);
  }
  const auto csv = eval::sweep_csv(o.grid, rows);
  if (!o.out.empty()) write_text(o.out, csv);
  out << csv;
  return kOk;
}

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, NAN};
  double ss = 0.0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

int cmd_bench(const Options& o, std::ostream& out) {
  if (o.epochs == 0) throw Error(ErrorCode::InvalidArgument, "--epochs must be >= 1");
  const auto ds = load_dataset_checked(o.dataset);
  auto cfg = finish(o.train);
  std::ostringstream csv;
  csv << "mode,samples,mean_seconds_per_epoch,sd_seconds_per_epoch\n";
  auto row = [&](const std::string& name, const std::vector<double>& xs) {
    const auto [mean, sd] = mean_sd(xs);
    csv << name << ',' << xs.size() << ',' << mean << ',';
    if (!std::isnan(sd)) csv << sd;
    csv << '\n';
    return mean;
  };
  cfg.mode = train::TrainMode::Mf;
  const double mf = row("mf", train::time_epochs(ds, cfg, o.epochs));
  cfg.mode = train::TrainMode::Gcn;
  const double gcn = row("gcn", train::time_epochs(ds, cfg, o.epochs));
  csv << "gcn_over_mf,," << gcn / mf << ",\n";
  if (!o.out.empty()) write_text(o.out, csv.str());
  out << csv.str();
  return kOk;
}

int cmd_study(const Options& o, std::ostream& out) {
  const auto ks = parse_ks(o.ks);
  const auto ds = load_dataset_checked(o.dataset);
  const auto study = eval::run_variant_study(ds, finish(o.train), ks, o.conv.K);
  const auto csv = study.to_csv();
  if (!o.out.empty()) write_text(fs::path(o.out) / "variants.csv", csv);
  out << csv;
  return kOk;
}

}  // namespace

ConfigFile parse_config(std::istream& in) {
  ConfigFile cfg;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') {
        throw Error(ErrorCode::MalformedLine, "config line " + std::to_string(line_no));
      }
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::MalformedLine,
                  "config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(std::string_view(body).substr(0, eq));
    auto value = trim(std::string_view(body).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) throw Error(ErrorCode::MalformedLine, "config line " + std::to_string(line_no));
    cfg[section].emplace_back(flag_name(key), value);
  }
  return cfg;
}

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string config_path;
  std::size_t sub_pos = 0;
  for (std::size_t k = 1; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) config_path = args[k + 1];
    else if (args[k].rfind("--config=", 0) == 0) config_path = args[k].substr(9);
    else if (sub_pos == 0 && !args[k].empty() && args[k][0] != '-') sub_pos = k;
  }
  if (config_path.empty() || sub_pos == 0) return args;
  std::ifstream in(config_path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + config_path);
  const auto cfg = parse_config(in);

  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
  };
  std::map<std::string, std::string> merged;
  std::vector<std::string> order;
  for (const auto* name : {"", "common"}) {
    if (auto it = cfg.find(name); it != cfg.end())
      for (const auto& [k, v] : it->second) {
        if (!merged.contains(k)) order.push_back(k);
        merged[k] = v;
      }
  }
  if (auto it = cfg.find(args[sub_pos]); it != cfg.end()) {
    for (const auto& [k, v] : it->second) {
      if (!merged.contains(k)) order.push_back(k);
      merged[k] = v;
    }
  }
  std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1);
  for (const auto& k : order) {
    if (k == "config" || given(k)) continue;
    out.push_back("--" + k);
    out.push_back(merged[k]);
  }
  out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, args.end());
  return out;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  kernels::configure_threads_from_env();
  Options o;
  CLI::App app{"Post-training graph convolution recommender"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic interaction log");
  synth->add_option("--out", o.out, "output TSV")->required();
  synth->add_option("--users", o.synth.n_users);
  synth->add_option("--items", o.synth.n_items);
  synth->add_option("--latent-dim", o.synth.latent_dim);
  synth->add_option("--clusters", o.synth.n_clusters);
  synth->add_option("--cluster-strength", o.synth.cluster_strength);
  synth->add_option("--popularity", o.synth.popularity_exponent);
  synth->add_option("--degree", o.synth.mean_user_degree, "mean interactions per user");
  synth->add_option("--affinity", o.synth.affinity);
  synth->add_option("--noise", o.synth.noise);
  synth->add_option("--activity-sigma", o.synth.activity_sigma, "log-normal spread of user degree");
  synth->add_option("--seed", o.synth.seed);

  auto* prepare = app.add_subcommand("prepare", "filter, split and persist a dataset");
  prepare->add_option("--raw", o.raw, "raw user<TAB>item[<TAB>ts] file")->required();
  prepare->add_option("--k-core", o.k_core, "minimum degree");
  prepare->add_option("--ratios", o.ratios, "train,valid,test fractions");
  prepare->add_option("--seed", o.seed);
  prepare->add_option("--out", o.out, "dataset directory")->required();

  auto* trn = app.add_subcommand("train", "train base embeddings");
  trn->add_option("--dataset", o.dataset)->required();
  trn->add_option("--out", o.out, "run directory")->required();
  add_train_options(trn, o.train);

  auto* cnv = app.add_subcommand("convolve", "apply post-training convolution");
  cnv->add_option("--dataset", o.dataset)->required();
  cnv->add_option("--checkpoint", o.checkpoint)->required();
  cnv->add_option("--out", o.out, "output checkpoint")->required();
  add_conv_options(cnv, o.conv);

  auto* ev = app.add_subcommand("eval", "full-ranking evaluation");
  ev->add_option("--dataset", o.dataset)->required();
  ev->add_option("--checkpoint", o.checkpoint)->required();
  ev->add_option("--ks", o.ks, "comma-separated cutoffs");
  ev->add_option("--split", o.split)->check(CLI::IsMember({"valid", "test"}));
  ev->add_option("--out", o.out, "directory for metrics CSV");

  auto* sw = app.add_subcommand("sweep", "metric vs t, K or gamma");
  sw->add_option("--dataset", o.dataset)->required();
  sw->add_option("--checkpoint", o.checkpoint, "trained embeddings (t and K grids)");
  sw->add_option("--grid", o.grid)->check(CLI::IsMember({"t", "K", "gamma"}));
  sw->add_option("--values", o.values, "comma-separated grid values");
  sw->add_option("--ks", o.ks);
  sw->add_option("--split", o.split)->check(CLI::IsMember({"valid", "test"}));
  sw->add_option("--out", o.out, "output CSV");
  add_conv_options(sw, o.conv);
  add_train_options(sw, o.train);

  auto* bench = app.add_subcommand("bench", "seconds per epoch, mf vs gcn training");
  bench->add_option("--dataset", o.dataset)->required();
  bench->add_option("--epochs", o.epochs);
  bench->add_option("--out", o.out, "output CSV");
  add_train_options(bench, o.train);

  auto* study = app.add_subcommand("study", "MF/LightGCN init vs conv comparison");
  study->add_option("--dataset", o.dataset)->required();
  study->add_option("--ks", o.ks);
  study->add_option("--out", o.out, "output directory");
  study->add_option("--K", o.conv.K, "convolution depth");
  add_train_options(study, o.train);

  for (auto* sub : app.get_subcommands({})) sub->add_option("--config", o.config, "key = value file");
  trn->get_option("--train-K")->default_val(2);
  bench->get_option("--train-K")->default_val(2);
  o.train.mode = "mf";

  try {
    auto args = expand_config(raw_args);
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    try {
      app.parse(rev);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << '\n';
      return kUsage;
    }
    if (*synth) return cmd_synth(o, out);
    if (*prepare) return cmd_prepare(o, out);
    if (*trn) return cmd_train(o, out);
    if (*cnv) return cmd_convolve(o, out);
    if (*ev) return cmd_eval(o, out);
    if (*sw) return cmd_sweep(o, out);
    if (*bench) return cmd_bench(o, out);
    if (*study) return cmd_study(o, out);
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace gode::cli
