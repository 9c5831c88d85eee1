#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>

#include "gsml/error.hpp"
#include "gsml/experiment.hpp"

namespace gsml::cli {

namespace {

struct Flags {
  // synthetic data
  std::size_t classes = 64;
  std::size_t groups = 8;
  std::size_t dim = 32;
  std::size_t per_class = 0;
  std::size_t per_class_min = 6;
  std::size_t per_class_max = 6;
  double group_scale = 6.0;
  double class_scale = 1.0;
  double sigma = 0.8;
  std::size_t nuisance_dims = 16;
  double nuisance_sigma = 3.0;
  std::uint64_t seed = 1;
  std::size_t holdout_classes = 0;
  std::string test_out;

  // training
  std::string train_file;
  std::string test_file;
  std::string sampler = "gs";
  std::size_t batch_size = 64;
  std::size_t k = 2;
  double margin = 16.0;
  std::string clip = "8";
  std::size_t epochs = 15;
  std::size_t decay_epoch = 10;
  double decay_factor = 0.1;
  double lr = 0.01;
  std::string metric = "euclidean";
  std::string rerank = "kreciprocal";
  std::size_t k1 = 20;
  std::size_t k2 = 6;
  double lambda = 0.3;
  bool match_gs_iters = false;
  std::size_t pk_batches = 0;
  std::size_t subspaces = 10;
  std::string model = "linear";
  std::size_t dim_out = 16;
  std::size_t hidden = 64;
  bool no_bias = false;
  bool l2_normalize = false;
  bool exemplars_train_mode = false;
  std::size_t eval_every = 0;
  std::size_t queries_per_class = 1;
  std::uint64_t split_seed = 1;
  bool dump_plans = false;

  // eval / bench
  std::string checkpoint;
  std::string data_file;
  std::size_t runs = 4;
  std::optional<double> target_map;
  std::vector<std::string> samplers = {"pk", "cluster", "gs"};

  std::string out;
  std::string config;
};

void add_synth_flags(CLI::App* app, Flags& f) {
  app->add_option("--classes", f.classes, "Number of (training) classes C");
  app->add_option("--groups", f.groups, "Number of class groups (super-clusters)");
  app->add_option("--dim", f.dim, "Ambient feature dimension d_in");
  app->add_option("--per-class", f.per_class, "Samples per class (sets min = max)");
  app->add_option("--per-class-min", f.per_class_min, "Minimum samples per class");
  app->add_option("--per-class-max", f.per_class_max, "Maximum samples per class");
  app->add_option("--group-scale", f.group_scale, "Std of group centers");
  app->add_option("--class-scale", f.class_scale, "Std of class offsets around their group center");
  app->add_option("--sigma", f.sigma, "Within-class noise std");
  app->add_option("--nuisance-dims", f.nuisance_dims, "Trailing dimensions holding only noise");
  app->add_option("--nuisance-sigma", f.nuisance_sigma, "Noise std of the nuisance dimensions");
  app->add_option("--holdout-classes", f.holdout_classes, "Extra classes generated for held-out evaluation");
}

void add_train_flags(CLI::App* app, Flags& f) {
  app->add_option("--sampler", f.sampler, "Mini-batch sampler")->check(CLI::IsMember({"pk", "gs", "cluster"}));
  app->add_option("--batch-size", f.batch_size, "Batch size B");
  app->add_option("--k", f.k, "Instances per class K");
  app->add_option("--margin", f.margin, "Triplet margin m");
  app->add_option("--clip", f.clip, "Gradient-norm clip threshold T, or none");
  app->add_option("--epochs", f.epochs, "Training epochs");
  app->add_option("--decay-epoch", f.decay_epoch, "Epoch at which the learning rate decays");
  app->add_option("--decay-factor", f.decay_factor, "Learning-rate decay factor");
  app->add_option("--lr", f.lr, "SGD learning rate");
  app->add_option("--metric", f.metric, "Distance")->check(CLI::IsMember({"euclidean", "cosine"}));
  app->add_option("--rerank", f.rerank, "Re-ranking of the class distance matrix")
      ->check(CLI::IsMember({"none", "kreciprocal"}));
  app->add_option("--k1", f.k1, "k-reciprocal neighborhood size");
  app->add_option("--k2", f.k2, "k-reciprocal query-expansion size");
  app->add_option("--lambda", f.lambda, "Weight of the original distance after re-ranking");
  app->add_flag("--match-gs-iters", f.match_gs_iters, "PK/cluster epochs hold C batches, like GS");
  app->add_option("--pk-batches", f.pk_batches, "PK/cluster batches per epoch (0: ceil(N/B))");
  app->add_option("--subspaces", f.subspaces, "Cluster count M for the cluster sampler");
  app->add_option("--model", f.model, "Embedding model")->check(CLI::IsMember({"linear", "mlp1"}));
  app->add_option("--dim-out", f.dim_out, "Embedding dimension");
  app->add_option("--hidden", f.hidden, "Hidden width of mlp1");
  app->add_flag("--no-bias", f.no_bias, "Drop bias terms");
  app->add_flag("--l2-normalize", f.l2_normalize, "L2-normalize embeddings");
  app->add_flag("--exemplars-train-mode", f.exemplars_train_mode,
                "Embed graph exemplars in training mode instead of inference mode");
  app->add_option("--eval-every", f.eval_every, "Held-out evaluation interval in iterations (0: per epoch)");
  app->add_option("--queries-per-class", f.queries_per_class, "Query samples per held-out class");
  app->add_option("--split-seed", f.split_seed, "Seed of the query/gallery split");
}

SyntheticConfig synth_config(const Flags& f) {
  SyntheticConfig cfg;
  cfg.num_classes = f.classes;
  cfg.num_groups = f.groups;
  cfg.ambient_dim = f.dim;
  cfg.samples_per_class_min = f.per_class > 0 ? f.per_class : f.per_class_min;
  cfg.samples_per_class_max = f.per_class > 0 ? f.per_class : f.per_class_max;
  cfg.group_center_scale = f.group_scale;
  cfg.class_center_scale = f.class_scale;
  cfg.within_class_sigma = f.sigma;
  cfg.nuisance_dims = f.nuisance_dims;
  cfg.nuisance_sigma = f.nuisance_sigma;
  cfg.seed = f.seed;
  return cfg;
}

std::optional<double> parse_clip(const std::string& text) {
  if (text == "none") return std::nullopt;
  double t = 0.0;
  try {
    std::size_t used = 0;
    t = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    throw ConfigError("--clip expects none or a positive number, got '" + text + "'");
  }
  if (!(t > 0.0)) throw ConfigError("--clip must be > 0 (use --clip none to disable clipping)");
  return t;
}

TrainConfig train_config(const Flags& f) {
  TrainConfig cfg;
  cfg.lr = f.lr;
  cfg.decay_factor = f.decay_factor;
  cfg.decay_epoch = f.decay_epoch;
  cfg.total_epochs = f.epochs;
  cfg.clip_threshold = parse_clip(f.clip);
  cfg.seed = f.seed;
  cfg.eval_mode_exemplars = !f.exemplars_train_mode;
  cfg.metric = parse_distance_kind(f.metric);
  cfg.rerank = {parse_rerank_mode(f.rerank), f.k1, f.k2, f.lambda};
  cfg.loss.margin = f.margin;
  cfg.sampler = {f.batch_size, f.k, f.seed};
  cfg.pk_batches_per_epoch = f.pk_batches;
  cfg.match_gs_iters = f.match_gs_iters;
  cfg.num_subspaces = f.subspaces;
  cfg.eval_every = f.eval_every;
  validate(cfg);
  return cfg;
}

ModelShape model_shape(const Flags& f) {
  ModelShape shape;
  shape.kind = parse_model_kind(f.model);
  shape.d_out = f.dim_out;
  shape.d_hidden = shape.kind == ModelKind::kMlp1 ? f.hidden : 0;
  shape.bias = !f.no_bias;
  shape.l2_normalize_output = f.l2_normalize;
  return shape;
}

std::string strip(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// Inserts arguments read from --config right after the subcommand so that
// later command-line flags take precedence.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    std::size_t consumed = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      consumed = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      consumed = 1;
    } else {
      continue;
    }
    args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i + consumed));
    const auto extra = config_file_args(path);
    const std::size_t at = std::min<std::size_t>(2, args.size());
    args.insert(args.begin() + static_cast<long>(at), extra.begin(), extra.end());
    break;
  }
  return args;
}

}  // namespace

std::vector<std::string> config_file_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path, line_no, "expected key=value");
    const std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    if (key == "config" || key == "help") continue;
    value.erase(std::remove_if(value.begin(), value.end(), [](char c) {
                  return c == '"' || c == '\'' || c == '[' || c == ']' || c == ' ';
                }),
                value.end());
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Graph-sampling metric learning toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto* gen = app.add_subcommand("gen", "Generate a synthetic feature file");
  add_synth_flags(gen, f);
  gen->add_option("--seed", f.seed, "Random seed");
  gen->add_option("--test-out", f.test_out, "Output path for the held-out classes");
  gen->add_option("-o,--out", f.out, "Output feature file")->required();

  auto* train = app.add_subcommand("train", "Train an embedding model");
  train->add_option("--train", f.train_file, "Training feature file")->required();
  train->add_option("--test", f.test_file, "Held-out feature file for evaluation");
  add_train_flags(train, f);
  train->add_option("--seed", f.seed, "Random seed");
  train->add_flag("--dump-plans", f.dump_plans, "Write every epoch's batch plan to plans.txt");
  train->add_option("-o,--out", f.out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a feature file");
  eval->add_option("--checkpoint", f.checkpoint, "Model checkpoint")->required();
  eval->add_option("--data", f.data_file, "Feature file with held-out classes")->required();
  eval->add_option("--queries-per-class", f.queries_per_class, "Query samples per class");
  eval->add_option("--split-seed", f.split_seed, "Seed of the query/gallery split");
  eval->add_option("--metric", f.metric, "Distance")->check(CLI::IsMember({"euclidean", "cosine"}));
  eval->add_option("-o,--out", f.out, "Eval CSV output path");

  auto* bench = app.add_subcommand("bench", "Compare samplers over several seeded runs");
  add_synth_flags(bench, f);
  add_train_flags(bench, f);
  bench->add_option("--seed", f.seed, "Base seed; run r uses seed XOR r");
  bench->add_option("--runs", f.runs, "Runs per sampler");
  bench->add_option("--target-map", f.target_map, "Held-out mAP target (default: PK's final mAP)");
  bench->add_option("--samplers", f.samplers, "Samplers to compare")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->check(CLI::IsMember({"pk", "gs", "cluster"}));
  bench->add_option("-o,--out", f.out, "Output directory");

  for (auto* sub : {gen, train, eval, bench}) {
    sub->add_option("--config", f.config, "Flat key=value config file (flags override it)");
  }

  try {
    args = expand_config(std::move(args));
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (gen->parsed()) {
      GenOptions opts;
      opts.synth = synth_config(f);
      opts.holdout_classes = f.holdout_classes;
      opts.out = f.out;
      if (!f.test_out.empty()) opts.test_out = f.test_out;
      const GenSummary s = run_gen(opts);
      out << "N=" << s.train.size() << " C=" << s.train.num_classes() << " d_in=" << s.train.dim() << '\n';
      if (s.test) {
        out << "held-out N=" << s.test->size() << " C=" << s.test->num_classes() << '\n';
      }
    } else if (train->parsed()) {
      TrainOptions opts;
      opts.train_file = f.train_file;
      if (!f.test_file.empty()) opts.test_file = f.test_file;
      opts.out_dir = f.out;
      opts.train = train_config(f);
      opts.sampler = parse_sampler_kind(f.sampler);
      opts.model = model_shape(f);
      opts.model_seed = f.seed;
      opts.queries_per_class = f.queries_per_class;
      opts.split_seed = f.split_seed;
      opts.dump_plans = f.dump_plans;
      opts.manifest = train->config_to_str(true, false);
      const TrainOutcome result = run_train(opts);
      out << "iterations=" << result.log.iterations.size() << " epochs=" << result.log.epochs.size() << '\n';
      if (result.final_eval) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "rank1=%.4f map=%.4f\n", result.final_eval->rank1, result.final_eval->map);
        out << buf;
      }
    } else if (eval->parsed()) {
      EvalOptions opts;
      opts.checkpoint = f.checkpoint;
      opts.feature_file = f.data_file;
      opts.queries_per_class = f.queries_per_class;
      opts.split_seed = f.split_seed;
      opts.metric = parse_distance_kind(f.metric);
      if (!f.out.empty()) opts.out = f.out;
      const EvalRow row = run_eval(opts);
      char buf[96];
      std::snprintf(buf, sizeof buf, "rank1=%.4f map=%.4f queries=%zu\n", row.rank1, row.map, row.num_queries);
      out << buf;
    } else if (bench->parsed()) {
      BenchOptions opts;
      opts.synth = synth_config(f);
      opts.holdout_classes = f.holdout_classes;
      opts.train = train_config(f);
      opts.model = model_shape(f);
      opts.runs = f.runs;
      opts.queries_per_class = f.queries_per_class;
      opts.target_map = f.target_map;
      opts.samplers.clear();
      for (const auto& s : f.samplers) opts.samplers.push_back(parse_sampler_kind(s));
      if (!f.out.empty()) opts.out_dir = f.out;
      opts.manifest = bench->config_to_str(true, false);
      const auto rows = run_bench(opts, &out);
      for (const SamplerSummary& s : summarize(rows)) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-7s mAcc %.4f +- %.4f over %zu runs\n",
                      std::string(to_string(s.sampler)).c_str(), s.macc_mean, s.macc_std, s.runs);
        out << buf;
      }
    }
  } catch (const TrainingAborted& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace gsml::cli
