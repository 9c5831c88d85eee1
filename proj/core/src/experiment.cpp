#include "gsml/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "gsml/error.hpp"
#include "gsml/random.hpp"

namespace gsml {

namespace fs = std::filesystem;

SyntheticConfig reference_synthetic_config() {
  SyntheticConfig cfg;
  cfg.num_classes = 64;
  cfg.num_groups = 8;
  cfg.ambient_dim = 32;
  cfg.samples_per_class_min = 6;
  cfg.samples_per_class_max = 6;
  cfg.group_center_scale = 6.0;
  cfg.class_center_scale = 1.0;
  cfg.within_class_sigma = 0.8;
  cfg.nuisance_dims = 16;
  cfg.nuisance_sigma = 3.0;
  cfg.seed = 1;
  return cfg;
}

GenSummary generate_train_test(const SyntheticConfig& synth, std::size_t holdout_classes) {
  if (holdout_classes == 0) return {generate_synthetic(synth), std::nullopt};
  SyntheticConfig all = synth;
  all.num_classes = synth.num_classes + holdout_classes;
  const LabeledFeatureSet full = generate_synthetic(all);
  auto [train, test] = split_by_class(full, holdout_classes, derive_seed(synth.seed, 0x5eed));
  return {std::move(train), std::move(test)};
}

namespace {

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::ofstream open_out(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

GenSummary run_gen(const GenOptions& opts) {
  GenSummary summary = generate_train_test(opts.synth, opts.holdout_classes);
  ensure_parent(opts.out);
  save_featureset(summary.train, opts.out);
  if (summary.test) {
    if (!opts.test_out) throw ConfigError("held-out classes requested without a test output path");
    ensure_parent(*opts.test_out);
    save_featureset(*summary.test, *opts.test_out);
  }
  return summary;
}

TrainOutcome run_train(const TrainOptions& opts) {
  const LabeledFeatureSet data = load_featureset(opts.train_file);
  std::optional<EvalSplit> split;
  if (opts.test_file) {
    split = make_split(load_featureset(*opts.test_file), opts.queries_per_class, opts.split_seed);
  }
  ModelShape shape = opts.model;
  shape.d_in = data.dim();
  validate(shape);
  fs::create_directories(opts.out_dir);
  open_out(opts.out_dir / "manifest.txt") << opts.manifest;

  std::ofstream plans;
  PlanObserver observer;
  if (opts.dump_plans) {
    plans = open_out(opts.out_dir / "plans.txt");
    observer = [&plans](std::size_t epoch, const BatchPlan& plan) {
      plans << "# epoch " << epoch << " sampler " << to_string(plan.provenance) << '\n';
      write_plan(plans, plan);
    };
  }

  TrainResult result;
  try {
    result = train(data, EmbeddingModel::random(shape, opts.model_seed), opts.train, opts.sampler,
                   split ? &*split : nullptr, observer);
  } catch (const TrainingAborted& e) {
    open_out(opts.out_dir / "divergence.txt") << e.what() << '\n' << e.state();
    throw;
  }

  TrainOutcome outcome{result.model, result.log, std::nullopt};
  save_model(outcome.model, opts.out_dir / "model.txt");
  {
    std::ofstream metrics = open_out(opts.out_dir / "metrics.csv");
    write_iterations_csv(metrics, outcome.log);
    std::ofstream epochs = open_out(opts.out_dir / "epochs.csv");
    write_epochs_csv(epochs, outcome.log);
  }
  if (split) {
    const EvalReport report = evaluate(outcome.model, *split, opts.train.metric);
    outcome.final_eval = EvalRow{"test", opts.split_seed, report.rank1, report.map, report.num_queries};
    const std::vector<EvalRow> rows{*outcome.final_eval};
    std::ofstream eval = open_out(opts.out_dir / "eval.csv");
    write_eval_csv(eval, rows);
    std::ofstream curve = open_out(opts.out_dir / "eval_curve.csv");
    write_eval_curve_csv(curve, outcome.log);
  }
  return outcome;
}

EvalRow run_eval(const EvalOptions& opts) {
  const EmbeddingModel model = load_model(opts.checkpoint);
  const LabeledFeatureSet data = load_featureset(opts.feature_file);
  if (model.shape().d_in != data.dim()) {
    throw ValidationError("checkpoint expects " + std::to_string(model.shape().d_in) +
                          " input features but '" + opts.feature_file.string() + "' has " +
                          std::to_string(data.dim()));
  }
  const EvalSplit split = make_split(data, opts.queries_per_class, opts.split_seed);
  const EvalReport report = evaluate(model, split, opts.metric);
  EvalRow row{"test", opts.split_seed, report.rank1, report.map, report.num_queries};
  if (opts.out) {
    const std::vector<EvalRow> rows{row};
    std::ofstream out = open_out(*opts.out);
    write_eval_csv(out, rows);
  }
  return row;
}

double first_epoch_active_fraction(const MetricsLog& log) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const IterationRecord& r : log.iterations) {
    if (r.epoch != 0) break;
    sum += r.active_fraction;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

long long iterations_to_target(const MetricsLog& log, double target) {
  for (const EvalPoint& p : log.evals) {
    if (p.map >= target) return static_cast<long long>(p.iter);
  }
  return -1;
}

std::vector<BenchRow> run_bench(const BenchOptions& opts, std::ostream* progress) {
  if (opts.runs < 1) throw ConfigError("runs must be >= 1");
  std::vector<BenchRow> rows;
  for (std::size_t run = 0; run < opts.runs; ++run) {
    const std::uint64_t seed = opts.synth.seed ^ static_cast<std::uint64_t>(run);
    SyntheticConfig synth = opts.synth;
    synth.seed = seed;
    const GenSummary data = generate_train_test(synth, opts.holdout_classes);
    if (!data.test) throw ConfigError("bench needs held-out classes");
    const EvalSplit split = make_split(*data.test, opts.queries_per_class, derive_seed(seed, 0xe7a1));
    ModelShape shape = opts.model;
    shape.d_in = data.train.dim();
    const EmbeddingModel initial = EmbeddingModel::random(shape, derive_seed(seed, 0x30de1));
    TrainConfig cfg = opts.train;
    cfg.seed = seed;
    const std::uint64_t hash = content_hash(data.train);

    std::map<SamplerKind, TrainResult> results;
    std::map<SamplerKind, double> wall;
    for (SamplerKind kind : opts.samplers) {
      const auto start = std::chrono::steady_clock::now();
      results.emplace(kind, train(data.train, initial, cfg, kind, &split));
      wall[kind] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    double target = opts.target_map.value_or(-1.0);
    if (!opts.target_map) {
      auto pk = results.find(SamplerKind::kPk);
      if (pk == results.end()) throw ConfigError("target mAP defaults to PK's final mAP; include pk or set a target");
      target = pk->second.log.evals.back().map;
    }
    for (SamplerKind kind : opts.samplers) {
      const TrainResult& r = results.at(kind);
      const EvalPoint& last = r.log.evals.back();
      BenchRow row;
      row.sampler = kind;
      row.seed = seed;
      row.final_rank1 = last.rank1;
      row.final_map = last.map;
      row.macc = 0.5 * (last.rank1 + last.map);
      row.active_frac_epoch1 = first_epoch_active_fraction(r.log);
      row.iters_to_target = iterations_to_target(r.log, target);
      row.wall_seconds = wall[kind];
      row.data_hash = hash;
      if (progress) {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "run %zu seed %llu %-7s macc=%.4f rank1=%.4f map=%.4f active1=%.4f iters_to_target=%lld "
                      "data_hash=%016llx\n",
                      run, static_cast<unsigned long long>(seed), std::string(to_string(kind)).c_str(), row.macc,
                      row.final_rank1, row.final_map, row.active_frac_epoch1, row.iters_to_target,
                      static_cast<unsigned long long>(hash));
        *progress << buf << std::flush;
      }
      rows.push_back(row);
    }
  }
  if (opts.out_dir) {
    fs::create_directories(*opts.out_dir);
    std::ofstream comparison = open_out(*opts.out_dir / "comparison.csv");
    write_comparison_csv(comparison, rows);
    open_out(*opts.out_dir / "manifest.txt") << opts.manifest;
    std::ofstream summary = open_out(*opts.out_dir / "summary.csv");
    summary << "sampler,runs,macc_mean,macc_std\n";
    for (const SamplerSummary& s : summarize(rows)) {
      char buf[128];
      std::snprintf(buf, sizeof buf, ",%zu,%.17g,%.17g\n", s.runs, s.macc_mean, s.macc_std);
      summary << to_string(s.sampler) << buf;
    }
  }
  return rows;
}

std::vector<SamplerSummary> summarize(const std::vector<BenchRow>& rows) {
  std::map<SamplerKind, std::vector<double>> by_sampler;
  std::vector<SamplerKind> order;
  for (const BenchRow& r : rows) {
    if (!by_sampler.contains(r.sampler)) order.push_back(r.sampler);
    by_sampler[r.sampler].push_back(r.macc);
  }
  std::vector<SamplerSummary> out;
  for (SamplerKind kind : order) {
    const auto& v = by_sampler[kind];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    out.push_back({kind, mean, sd, v.size()});
  }
  return out;
}

void write_comparison_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "sampler,seed,macc,active_frac_epoch1,iters_to_target,wall_seconds\n";
  char buf[160];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof buf, ",%llu,%.17g,%.17g,%lld,%.6f\n", static_cast<unsigned long long>(r.seed),
                  r.macc, r.active_frac_epoch1, r.iters_to_target, r.wall_seconds);
    out << to_string(r.sampler) << buf;
  }
}

}  // namespace gsml
