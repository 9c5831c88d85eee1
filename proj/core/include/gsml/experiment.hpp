#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gsml/data.hpp"
#include "gsml/evaluation.hpp"
#include "gsml/model.hpp"
#include "gsml/sampler.hpp"
#include "gsml/trainer.hpp"

namespace gsml {

// Synthetic world used by the sampler comparison: 64 training classes in 8
// groups, 32-dimensional features of which the last 16 are pure noise.
SyntheticConfig reference_synthetic_config();

struct GenOptions {
  SyntheticConfig synth;            // num_classes counts training classes only
  std::size_t holdout_classes = 0;  // extra classes written to test_out
  std::filesystem::path out;
  std::optional<std::filesystem::path> test_out;
};

struct GenSummary {
  LabeledFeatureSet train;
  std::optional<LabeledFeatureSet> test;
};

// Generates num_classes + holdout_classes classes from one synthetic world and
// splits off the held-out classes.
GenSummary generate_train_test(const SyntheticConfig& synth, std::size_t holdout_classes);
GenSummary run_gen(const GenOptions& opts);

struct TrainOptions {
  std::filesystem::path train_file;
  std::optional<std::filesystem::path> test_file;
  std::filesystem::path out_dir;
  TrainConfig train;
  SamplerKind sampler = SamplerKind::kGs;
  ModelShape model;  // d_in is taken from the data
  std::uint64_t model_seed = 1;
  std::size_t queries_per_class = 1;
  std::uint64_t split_seed = 1;
  bool dump_plans = false;
  std::string manifest;  // echoed config
};

struct TrainOutcome {
  EmbeddingModel model;
  MetricsLog log;
  std::optional<EvalRow> final_eval;
};

// Writes model.txt, metrics.csv, epochs.csv and manifest.txt (plus eval.csv
// and eval_curve.csv with a test file, plans.txt with dump_plans) to out_dir.
// A diverging run leaves divergence.txt and rethrows.
TrainOutcome run_train(const TrainOptions& opts);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path feature_file;
  std::size_t queries_per_class = 1;
  std::uint64_t split_seed = 1;
  DistanceKind metric = DistanceKind::kEuclidean;
  std::optional<std::filesystem::path> out;
};

EvalRow run_eval(const EvalOptions& opts);

struct BenchOptions {
  SyntheticConfig synth = reference_synthetic_config();
  std::size_t holdout_classes = 32;
  TrainConfig train;
  ModelShape model;
  std::size_t runs = 4;
  std::size_t queries_per_class = 1;
  // Held-out mAP target for iterations-to-target; unset means the PK run's
  // final mAP on the same seed.
  std::optional<double> target_map;
  std::vector<SamplerKind> samplers = {SamplerKind::kPk, SamplerKind::kCluster, SamplerKind::kGs};
  std::optional<std::filesystem::path> out_dir;
  std::string manifest;
};

struct BenchRow {
  SamplerKind sampler = SamplerKind::kGs;
  std::uint64_t seed = 0;
  double macc = 0.0;
  double active_frac_epoch1 = 0.0;
  long long iters_to_target = -1;  // -1: never reached
  double wall_seconds = 0.0;
  double final_rank1 = 0.0;
  double final_map = 0.0;
  std::uint64_t data_hash = 0;
};

struct SamplerSummary {
  SamplerKind sampler = SamplerKind::kGs;
  double macc_mean = 0.0;
  double macc_std = 0.0;
  std::size_t runs = 0;
};

// Trains every sampler from the same data and initial model for each run;
// run r uses seed synth.seed XOR r.
std::vector<BenchRow> run_bench(const BenchOptions& opts, std::ostream* progress = nullptr);
std::vector<SamplerSummary> summarize(const std::vector<BenchRow>& rows);

// Mean training active fraction over the first epoch's iterations.
double first_epoch_active_fraction(const MetricsLog& log);
// Iterations completed at the first eval point with map >= target, or -1.
long long iterations_to_target(const MetricsLog& log, double target);

// `sampler,seed,macc,active_frac_epoch1,iters_to_target,wall_seconds`
void write_comparison_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace gsml
