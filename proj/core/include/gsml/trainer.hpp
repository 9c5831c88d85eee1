#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "gsml/data.hpp"
#include "gsml/evaluation.hpp"
#include "gsml/loss.hpp"
#include "gsml/metric.hpp"
#include "gsml/model.hpp"
#include "gsml/sampler.hpp"

namespace gsml {

struct Gradient {
  std::vector<double> values;
  double norm() const noexcept;
};

struct TrainConfig {
  double lr = 0.01;
  double decay_factor = 0.1;
  std::size_t decay_epoch = 10;
  std::size_t total_epochs = 15;
  std::optional<double> clip_threshold = 8.0;
  std::uint64_t seed = 1;
  bool eval_mode_exemplars = true;
  DistanceKind metric = DistanceKind::kEuclidean;
  RerankConfig rerank;
  LossConfig loss;
  SamplerConfig sampler;
  // PK / cluster batches per epoch; 0 means ceil(N / B).
  std::size_t pk_batches_per_epoch = 0;
  bool match_gs_iters = false;
  std::size_t num_subspaces = 10;  // cluster sampler
  // Held-out evaluation every this many iterations (0: end of epoch only).
  std::size_t eval_every = 0;
};

void validate(const TrainConfig& cfg);

// Learning rate in effect during `epoch` (0-based): one step decay.
double learning_rate(const TrainConfig& cfg, std::size_t epoch) noexcept;

// Rows of `features` selected by `batch`, plus their labels.
struct BatchData {
  Matrix features;
  std::vector<int> labels;
};

BatchData gather_batch(const LabeledFeatureSet& data, const Batch& batch);

struct LossAndGrad {
  LossOutput loss;
  Gradient gradient;
};

// Triplet loss of one batch (similarity = -distance) and its gradient w.r.t.
// every model parameter. Non-finite embeddings throw TrainingAborted.
LossAndGrad loss_and_grad(const EmbeddingModel& model, const Matrix& features,
                          std::span<const int> labels, DistanceKind metric, const LossConfig& cfg);

// g <- min(1, T / |g|) g. Throws TrainingAborted for non-finite input.
Gradient clip_gradient(Gradient g, double threshold);

// theta <- theta - lr(epoch) g.
void sgd_step(EmbeddingModel& model, const Gradient& g, std::size_t epoch, const TrainConfig& cfg);

struct IterationRecord {
  std::size_t epoch = 0;
  std::size_t iter = 0;  // global, 1-based
  double loss_sum = 0.0;
  double loss_mean = 0.0;
  double active_fraction = 0.0;
  double grad_norm_preclip = 0.0;
  double grad_norm_postclip = 0.0;
  bool clipped = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t iterations = 0;
  double plan_build_seconds = 0.0;
  double train_seconds = 0.0;
};

struct EvalPoint {
  std::size_t epoch = 0;
  std::size_t iter = 0;  // iterations completed when evaluated
  double rank1 = 0.0;
  double map = 0.0;
};

struct MetricsLog {
  std::vector<IterationRecord> iterations;
  std::vector<EpochRecord> epochs;
  std::vector<EvalPoint> evals;
};

// Deterministic per-iteration CSV (no wall-clock values).
void write_iterations_csv(std::ostream& out, const MetricsLog& log);
std::vector<IterationRecord> read_iterations_csv(std::istream& in);
void write_epochs_csv(std::ostream& out, const MetricsLog& log);
void write_eval_curve_csv(std::ostream& out, const MetricsLog& log);

struct TrainResult {
  EmbeddingModel model;
  MetricsLog log;
};

// GS graph input for `epoch`: exemplar embeddings, pairwise distance,
// re-ranking and a masked diagonal.
Matrix class_distance_matrix(const EmbeddingModel& model, const LabeledFeatureSet& data,
                             const DatasetIndex& index, const TrainConfig& cfg, std::size_t epoch);

// Builds one epoch's plan for `kind` with the model's current parameters.
BatchPlan build_epoch_plan(const EmbeddingModel& model, const LabeledFeatureSet& data,
                           const DatasetIndex& index, const TrainConfig& cfg, SamplerKind kind,
                           std::size_t epoch);

using PlanObserver = std::function<void(std::size_t epoch, const BatchPlan&)>;

// Runs cfg.total_epochs epochs of plan construction followed by clipped SGD
// over the plan's batches. When `heldout` is given it is evaluated before
// training (iter 0), every cfg.eval_every iterations and at each epoch end.
TrainResult train(const LabeledFeatureSet& data, EmbeddingModel model, const TrainConfig& cfg,
                  SamplerKind kind, const EvalSplit* heldout = nullptr,
                  const PlanObserver& on_plan = {});

}  // namespace gsml
