#include "gsml/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "gsml/error.hpp"
#include "gsml/random.hpp"

namespace gsml {

namespace {

// Sub-stream ids for derive_seed.
constexpr std::uint64_t kPlanStream = 1;
constexpr std::uint64_t kExemplarStream = 2;
constexpr std::uint64_t kClusterStream = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

double Gradient::norm() const noexcept { return norm2(values); }

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("learning rate must be > 0");
  if (!(cfg.decay_factor > 0.0 && cfg.decay_factor <= 1.0)) {
    throw ConfigError("decay factor must be in (0, 1]");
  }
  if (cfg.decay_epoch > cfg.total_epochs) throw ConfigError("decay epoch must not exceed total epochs");
  if (cfg.clip_threshold && !(*cfg.clip_threshold > 0.0)) {
    throw ConfigError("clip threshold T must be > 0 (use none to disable clipping)");
  }
  if (!std::isfinite(cfg.loss.margin)) throw ConfigError("margin must be finite");
  if (cfg.num_subspaces < 1) throw ConfigError("subspace count must be >= 1");
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) noexcept {
  return epoch >= cfg.decay_epoch ? cfg.lr * cfg.decay_factor : cfg.lr;
}

BatchData gather_batch(const LabeledFeatureSet& data, const Batch& batch) {
  BatchData out;
  out.features = Matrix(batch.size(), data.dim());
  out.labels.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto src = data.features.row(batch[i].index);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(batch[i].class_id);
  }
  return out;
}

LossAndGrad loss_and_grad(const EmbeddingModel& model, const Matrix& features,
                          std::span<const int> labels, DistanceKind metric, const LossConfig& cfg) {
  const ForwardCache cache = forward_cached(model, features);
  const Matrix& emb = cache.output;
  const std::size_t b = emb.rows();
  if (!emb.all_finite()) throw TrainingAborted("embeddings are not finite", "");
  Matrix sim = pairwise_distance(emb, emb, metric);
  for (double& v : sim.values()) v = -v;
  if (!sim.all_finite()) throw TrainingAborted("pairwise distances are not finite", "");

  LossAndGrad result;
  result.loss = batch_hard_triplet(sim, labels, cfg);

  // d loss / d distance = -(d loss / d similarity); chain into both endpoints.
  Matrix grad_emb(b, emb.cols());
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double g = -result.loss.grad_similarity(i, j);
      if (g == 0.0 || i == j) continue;
      auto ei = emb.row(i);
      auto ej = emb.row(j);
      auto gi = grad_emb.row(i);
      auto gj = grad_emb.row(j);
      if (metric == DistanceKind::kEuclidean) {
        const double d = euclidean_distance(ei, ej);
        if (d == 0.0) continue;
        for (std::size_t k = 0; k < ei.size(); ++k) {
          const double t = g * (ei[k] - ej[k]) / d;
          gi[k] += t;
          gj[k] -= t;
        }
      } else {
        const double ni = norm2(ei);
        const double nj = norm2(ej);
        if (ni == 0.0 || nj == 0.0) continue;
        const double c = dot(ei, ej) / (ni * nj);
        for (std::size_t k = 0; k < ei.size(); ++k) {
          gi[k] -= g * (ej[k] / (ni * nj) - c * ei[k] / (ni * ni));
          gj[k] -= g * (ei[k] / (ni * nj) - c * ej[k] / (nj * nj));
        }
      }
    }
  }
  result.gradient.values = backward(model, cache, grad_emb);
  return result;
}

Gradient clip_gradient(Gradient g, double threshold) {
  if (!(threshold > 0.0)) throw ValidationError("clip threshold T must be > 0");
  const double n = g.norm();
  if (!std::isfinite(n)) {
    throw TrainingAborted("gradient norm is not finite", "grad_norm=" + std::to_string(n) + "\n");
  }
  if (n > threshold) {
    const double scale = threshold / n;
    for (double& v : g.values) v *= scale;
  }
  return g;
}

void sgd_step(EmbeddingModel& model, const Gradient& g, std::size_t epoch, const TrainConfig& cfg) {
  auto params = model.parameters();
  if (g.values.size() != params.size()) {
    throw ValidationError("gradient has " + std::to_string(g.values.size()) + " entries, model has " +
                          std::to_string(params.size()));
  }
  const double lr = learning_rate(cfg, epoch);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * g.values[i];
}

Matrix class_distance_matrix(const EmbeddingModel& model, const LabeledFeatureSet& data,
                             const DatasetIndex& index, const TrainConfig& cfg, std::size_t epoch) {
  // The model is not mutated while the graph is built, so every exemplar
  // is embedded with the same parameter snapshot.
  const auto exemplars = select_exemplars(index, derive_seed(cfg.seed, epoch, kExemplarStream));
  const Matrix emb = forward(model, data.features.gather_rows(exemplars));
  const Matrix dist = pairwise_distance(emb, emb, cfg.metric);
  return mask_diagonal(rerank(dist, cfg.rerank.capped_for(index.num_classes())));
}

BatchPlan build_epoch_plan(const EmbeddingModel& model, const LabeledFeatureSet& data,
                           const DatasetIndex& index, const TrainConfig& cfg, SamplerKind kind,
                           std::size_t epoch) {
  SamplerConfig scfg = cfg.sampler;
  scfg.seed = derive_seed(cfg.seed, epoch, kPlanStream);
  const std::size_t c = index.num_classes();
  std::size_t iters = cfg.pk_batches_per_epoch;
  if (cfg.match_gs_iters) {
    iters = c;
  } else if (iters == 0) {
    iters = (data.size() + scfg.batch_size - 1) / scfg.batch_size;
  }
  switch (kind) {
    case SamplerKind::kGs: {
      const Matrix dist = class_distance_matrix(model, data, index, cfg, epoch);
      return gs_epoch_plan(build_class_graph(dist, scfg.classes_per_batch()), index, scfg);
    }
    case SamplerKind::kPk:
      return pk_epoch_plan(index, scfg, iters);
    case SamplerKind::kCluster: {
      // Class representations: mean embedding over every training sample.
      const Matrix emb = forward(model, data.features);
      Matrix means(c, emb.cols());
      std::vector<double> counts(c, 0.0);
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto dst = means.row(data.labels[i]);
        auto src = emb.row(i);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        counts[data.labels[i]] += 1.0;
      }
      for (std::size_t r = 0; r < c; ++r) {
        for (double& v : means.row(r)) v /= counts[r];
      }
      const std::size_t m = std::min(cfg.num_subspaces, c);
      const auto assignment = cluster_classes(means, m, derive_seed(cfg.seed, epoch, kClusterStream));
      return cluster_epoch_plan(assignment, index, scfg, iters);
    }
  }
  throw ConfigError("unknown sampler");
}

namespace {

std::string dump_state(const EmbeddingModel& model, const Batch& batch, std::size_t epoch,
                       std::size_t iter, double loss) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch " << epoch << "\niter " << iter << "\nloss " << loss
      << "\nparameter_norm " << norm2(model.parameters()) << "\nbatch";
  for (const BatchEntry& e : batch) out << ' ' << e.index << ':' << e.class_id;
  out << '\n';
  return out.str();
}

}  // namespace

TrainResult train(const LabeledFeatureSet& data, EmbeddingModel model, const TrainConfig& cfg,
                  SamplerKind kind, const EvalSplit* heldout, const PlanObserver& on_plan) {
  TrainResult result;
  if (cfg.total_epochs == 0) {
    result.model = std::move(model);
    return result;
  }
  validate(cfg);
  const DatasetIndex index = build_index(data);
  validate(cfg.sampler, index.num_classes());
  if (model.shape().d_in != data.dim()) {
    throw ValidationError("model expects " + std::to_string(model.shape().d_in) +
                          " input features, data has " + std::to_string(data.dim()));
  }

  MetricsLog& log = result.log;
  std::size_t iter = 0;
  auto run_eval = [&](std::size_t epoch) {
    const EvalReport r = evaluate(model, *heldout, cfg.metric);
    log.evals.push_back({epoch, iter, r.rank1, r.map});
  };
  if (heldout) run_eval(0);

  for (std::size_t epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const auto plan_start = Clock::now();
    const BatchPlan plan = build_epoch_plan(model, data, index, cfg, kind, epoch);
    EpochRecord record{epoch, plan.batches.size(), seconds_since(plan_start), 0.0};
    if (on_plan) on_plan(epoch, plan);

    const auto train_start = Clock::now();
    double eval_seconds = 0.0;
    for (const Batch& batch : plan.batches) {
      ++iter;
      const BatchData bd = gather_batch(data, batch);
      LossAndGrad lg;
      try {
        lg = loss_and_grad(model, bd.features, bd.labels, cfg.metric, cfg.loss);
      } catch (const TrainingAborted& e) {
        throw TrainingAborted(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", iteration " +
                                  std::to_string(iter),
                              dump_state(model, batch, epoch, iter, std::nan("")));
      }
      if (!std::isfinite(lg.loss.value)) {
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch) + ", iteration " +
                                  std::to_string(iter),
                              dump_state(model, batch, epoch, iter, lg.loss.value));
      }
      IterationRecord row;
      row.epoch = epoch;
      row.iter = iter;
      row.loss_sum = lg.loss.value;
      row.loss_mean = lg.loss.mean();
      row.active_fraction = lg.loss.active_fraction();
      row.grad_norm_preclip = lg.gradient.norm();
      if (!std::isfinite(row.grad_norm_preclip)) {
        throw TrainingAborted("non-finite gradient at iteration " + std::to_string(iter),
                              dump_state(model, batch, epoch, iter, lg.loss.value));
      }
      Gradient g = std::move(lg.gradient);
      if (cfg.clip_threshold) {
        g = clip_gradient(std::move(g), *cfg.clip_threshold);
        row.clipped = row.grad_norm_preclip > *cfg.clip_threshold;
      }
      row.grad_norm_postclip = row.clipped ? g.norm() : row.grad_norm_preclip;
      sgd_step(model, g, epoch, cfg);
      log.iterations.push_back(row);
      if (heldout && cfg.eval_every > 0 && iter % cfg.eval_every == 0) {
        const auto eval_start = Clock::now();
        run_eval(epoch);
        eval_seconds += seconds_since(eval_start);
      }
    }
    record.train_seconds = seconds_since(train_start) - eval_seconds;
    log.epochs.push_back(record);
    if (heldout && (log.evals.empty() || log.evals.back().iter != iter)) run_eval(epoch);
  }
  result.model = std::move(model);
  return result;
}

void write_iterations_csv(std::ostream& out, const MetricsLog& log) {
  out << "epoch,iter,loss_sum,loss_mean,active_fraction,grad_norm_preclip,grad_norm_postclip,clipped\n";
  char buf[256];
  for (const IterationRecord& r : log.iterations) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.epoch, r.iter, r.loss_sum,
                  r.loss_mean, r.active_fraction, r.grad_norm_preclip, r.grad_norm_postclip, r.clipped ? 1 : 0);
    out << buf;
  }
}

std::vector<IterationRecord> read_iterations_csv(std::istream& in) {
  std::vector<IterationRecord> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    IterationRecord r;
    int clipped = 0;
    if (std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf,%lf,%lf,%lf,%d", &r.epoch, &r.iter, &r.loss_sum,
                    &r.loss_mean, &r.active_fraction, &r.grad_norm_preclip, &r.grad_norm_postclip,
                    &clipped) != 8) {
      throw ParseError("<metrics csv>", line_no, "expected 8 columns");
    }
    r.clipped = clipped != 0;
    rows.push_back(r);
  }
  return rows;
}

void write_epochs_csv(std::ostream& out, const MetricsLog& log) {
  out << "epoch,iterations,plan_build_seconds,train_seconds\n";
  char buf[128];
  for (const EpochRecord& r : log.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g\n", r.epoch, r.iterations, r.plan_build_seconds,
                  r.train_seconds);
    out << buf;
  }
}

void write_eval_curve_csv(std::ostream& out, const MetricsLog& log) {
  out << "epoch,iter,rank1,map\n";
  char buf[128];
  for (const EvalPoint& p : log.evals) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g\n", p.epoch, p.iter, p.rank1, p.map);
    out << buf;
  }
}

}  // namespace gsml
