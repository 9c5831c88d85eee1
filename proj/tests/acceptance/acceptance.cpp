// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gsml/evaluation.hpp"
#include "gsml/experiment.hpp"
#include "gsml/loss.hpp"
#include "gsml/metric.hpp"
#include "gsml/sampler.hpp"
#include "gsml/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace gsml;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. GS plan structure over random configurations, checked against a graph
// rebuilt from the same class distance matrix by the full-sort oracle.
Outcome sampler_structure() {
  std::mt19937_64 rng(101);
  const auto start = Clock::now();
  std::size_t violations = 0, epochs = 0, k3 = 0;
  for (int cfg_id = 0; cfg_id < 50; ++cfg_id) {
    const std::size_t k = std::vector<std::size_t>{2, 3, 4}[rng() % 3];
    const std::size_t b_nominal = std::vector<std::size_t>{16, 32, 64}[rng() % 3];
    // B must be a multiple of K: K=3 uses the largest multiple below B.
    const std::size_t b = b_nominal / k * k;
    const std::size_t p = b / k;
    const std::size_t c = std::max<std::size_t>(p, 8 + rng() % 121);
    k3 += k == 3 ? 1 : 0;

    SyntheticConfig synth;
    synth.num_classes = c;
    synth.num_groups = std::min<std::size_t>(8, c);
    synth.samples_per_class_min = 1;
    synth.samples_per_class_max = 6;
    synth.ambient_dim = 8;
    synth.seed = rng();
    const auto data = generate_synthetic(synth);
    const auto index = build_index(data);

    TrainConfig cfg;
    cfg.sampler = {b, k, 0};
    cfg.seed = rng();
    for (std::size_t epoch = 0; epoch < 2; ++epoch) {
      ++epochs;
      const auto model = EmbeddingModel::random({ModelKind::kLinear, 8, 0, 6, true, false}, rng());
      const BatchPlan plan = build_epoch_plan(model, data, index, cfg, SamplerKind::kGs, epoch);
      const auto graph = oracle::sort_graph(class_distance_matrix(model, data, index, cfg, epoch), p);
      bool ok = plan.batches.size() == c;
      std::vector<int> centers;
      for (const Batch& batch : plan.batches) {
        if (batch.size() != b) {
          ok = false;
          continue;
        }
        const int center = batch[0].class_id;
        centers.push_back(center);
        std::vector<int> expected{center};
        expected.insert(expected.end(), graph[center].begin(), graph[center].end());
        std::sort(expected.begin(), expected.end());
        ok &= std::adjacent_find(expected.begin(), expected.end()) == expected.end();
        std::vector<int> got;
        for (std::size_t slot = 0; slot < p; ++slot) {
          const int cls = batch[slot * k].class_id;
          got.push_back(cls);
          for (std::size_t i = 0; i < k; ++i) {
            const BatchEntry& e = batch[slot * k + i];
            ok &= e.class_id == cls && e.index < data.size() && data.labels[e.index] == cls;
          }
        }
        std::sort(got.begin(), got.end());
        ok &= got == expected;
      }
      std::sort(centers.begin(), centers.end());
      ok &= centers == index.pids;
      violations += ok ? 0 : 1;
    }
  }
  const double secs = seconds_since(start);
  return {violations == 0 && secs < 10.0,
          fmt("%zu epochs over 50 configs (%zu with K=3), %zu violations, %.2f s", epochs, k3, violations, secs)};
}

// 2. Graph construction vs the full-sort oracle.
Outcome graph_oracle() {
  std::mt19937_64 rng(202);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + rng() % 49;
    const std::size_t p = 2 + rng() % (c - 1);
    Matrix d(c, c);
    // Every third matrix draws from a handful of values to force ties.
    std::uniform_int_distribution<int> coarse(0, 5);
    std::uniform_real_distribution<double> fine(0.0, 1.0);
    for (double& v : d.values()) v = trial % 3 == 0 ? coarse(rng) : fine(rng);
    d = mask_diagonal(d);
    if (build_class_graph(d, p).neighbors != oracle::sort_graph(d, p)) ++mismatches;
  }
  return {mismatches == 0, fmt("1000 matrices, %zu mismatches", mismatches)};
}

// 3. Batch-hard loss vs triple enumeration.
Outcome loss_oracle() {
  std::mt19937_64 rng(303);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = trial % 2 == 0 ? 2 : 4;
    std::vector<int> labels;
    for (std::size_t i = 0; i < 8; ++i) labels.push_back(static_cast<int>(i / k));
    std::shuffle(labels.begin(), labels.end(), rng);
    Matrix s(8, 8);
    std::uniform_int_distribution<int> coarse(-3, 3);
    std::normal_distribution<double> fine(0.0, 3.0);
    for (double& v : s.values()) v = trial % 4 == 0 ? coarse(rng) : fine(rng);
    const LossConfig cfg{3.0};
    const auto a = batch_hard_triplet(s, labels, cfg);
    const auto o = brute_force_triplet_oracle(s, labels, cfg);
    if (a.value != o.value || !(a.grad_similarity == o.grad_similarity) || a.active_count != o.active_count) {
      ++mismatches;
    }
  }
  return {mismatches == 0, fmt("1000 batches, %zu mismatches", mismatches)};
}

// 4. Analytic gradient vs central differences.
Outcome gradient_check() {
  std::mt19937_64 rng(404);
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0, excluded = 0, redrawn = 0;
  std::vector<int> labels{0, 0, 1, 1, 2, 2, 3, 3};
  for (int instance = 0; instance < 20; ++instance) {
    const ModelKind kind = instance % 2 == 0 ? ModelKind::kLinear : ModelKind::kMlp1;
    const EmbeddingModel model = EmbeddingModel::random({kind, 5, 6, 3, true, false}, rng());
    const Matrix x = oracle::random_matrix(8, 5, rng);
    const LossConfig cfg{3.0};
    const auto base = loss_and_grad(model, x, labels, DistanceKind::kEuclidean, cfg);
    if (base.loss.active_count == 0) {
      // No active hinge: the gradient is trivially zero. Draw again.
      ++redrawn;
      --instance;
      continue;
    }
    auto selection = [&](const LossOutput& l) {
      std::vector<std::size_t> sel = l.hardest_positive;
      sel.insert(sel.end(), l.hardest_negative.begin(), l.hardest_negative.end());
      sel.push_back(l.active_count);
      return sel;
    };
    const auto base_sel = selection(base.loss);
    for (std::size_t i = 0; i < model.num_parameters(); ++i) {
      EmbeddingModel plus = model, minus = model;
      plus.parameters()[i] += h;
      minus.parameters()[i] -= h;
      const auto lp = loss_and_grad(plus, x, labels, DistanceKind::kEuclidean, cfg).loss;
      const auto lm = loss_and_grad(minus, x, labels, DistanceKind::kEuclidean, cfg).loss;
      // The step crosses a hinge or argmin/argmax tie: not differentiable here.
      if (selection(lp) != base_sel || selection(lm) != base_sel) {
        ++excluded;
        continue;
      }
      const double numeric = (lp.value - lm.value) / (2 * h);
      const double analytic = base.gradient.values[i];
      const double scale = std::max(std::abs(numeric), std::abs(analytic));
      if (scale < 1e-7) continue;
      ++checked;
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  return {worst <= 1e-4,
          fmt("20 models, %zu parameters compared, %zu tie-excluded, %zu redrawn, max rel err %.3g", checked,
              excluded, redrawn, worst)};
}

// 5. Gradient clipping.
Outcome clipping() {
  std::mt19937_64 rng(505);
  const double t = 8.0;
  std::size_t failures = 0, above = 0;
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Gradient in;
    const std::size_t n = 1 + rng() % 200;
    const double scale = std::pow(10.0, log_scale(rng));
    for (std::size_t i = 0; i < n; ++i) in.values.push_back(g(rng) * scale);
    const Gradient out = clip_gradient(in, t);
    const double in_norm = in.norm(), out_norm = out.norm();
    bool ok = out_norm <= t + 1e-9;
    if (in_norm > t) {
      ++above;
      const double cosine = dot(in.values, out.values) / (in_norm * out_norm);
      ok &= std::abs(out_norm - t) <= 1e-9 && std::abs(cosine - 1.0) <= 1e-9;
    } else {
      ok &= out.values == in.values;
    }
    failures += ok ? 0 : 1;
  }
  return {failures == 0, fmt("1000 gradients (%zu above T=8), %zu failures", above, failures)};
}

// 6. Retrieval metrics vs the definition-level oracle.
Outcome evaluation_oracle() {
  std::mt19937_64 rng(606);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t classes = 2 + rng() % 6;
    const std::size_t nq = 1 + rng() % 12;
    const std::size_t ng = classes + rng() % 30;
    std::vector<int> ql, gl;
    for (std::size_t i = 0; i < ng; ++i) gl.push_back(static_cast<int>(i % classes));
    std::shuffle(gl.begin(), gl.end(), rng);
    for (std::size_t i = 0; i < nq; ++i) ql.push_back(static_cast<int>(rng() % classes));
    const std::size_t dim = 1 + rng() % 4;
    Matrix q = oracle::random_matrix(nq, dim, rng), g = oracle::random_matrix(ng, dim, rng);
    if (trial % 3 == 0) {
      for (double& v : q.values()) v = std::round(v);
      for (double& v : g.values()) v = std::round(v);
    }
    const auto got = evaluate_embeddings(q, ql, g, gl, DistanceKind::kEuclidean);
    const auto want = oracle::definition_ap(pairwise_distance(q, g, DistanceKind::kEuclidean), ql, gl);
    worst = std::max({worst, std::abs(got.rank1 - want.rank1), std::abs(got.map - want.map)});
    for (std::size_t i = 0; i < nq; ++i) worst = std::max(worst, std::abs(got.average_precisions[i] - want.aps[i]));
  }
  std::size_t imperfect = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t classes = 2 + rng() % 6;
    std::vector<int> ql, gl;
    Matrix q(classes, 3), g(3 * classes, 3);
    std::uniform_real_distribution<double> jitter(-0.4, 0.4);
    for (std::size_t c = 0; c < classes; ++c) {
      ql.push_back(static_cast<int>(c));
      for (std::size_t j = 0; j < 3; ++j) q(c, j) = 10.0 * static_cast<double>(c) * (j == 0) + jitter(rng);
      for (std::size_t r = 0; r < 3; ++r) {
        gl.push_back(static_cast<int>(c));
        for (std::size_t j = 0; j < 3; ++j) g(3 * c + r, j) = 10.0 * static_cast<double>(c) * (j == 0) + jitter(rng);
      }
    }
    const auto r = evaluate_embeddings(q, ql, g, gl, DistanceKind::kEuclidean);
    if (r.rank1 != 1.0 || r.map != 1.0) ++imperfect;
  }
  return {worst <= 1e-12 && imperfect == 0,
          fmt("200 instances, max abs diff %.3g; 50 perfect-ranking instances, %zu not exactly 1", worst,
              imperfect)};
}

// Reference comparison shared by criteria 7 and 8.
BenchOptions reference_bench() {
  BenchOptions opts;
  opts.synth = reference_synthetic_config();
  opts.holdout_classes = 32;
  opts.runs = 5;
  opts.samplers = {SamplerKind::kPk, SamplerKind::kGs};
  opts.model = {ModelKind::kLinear, 0, 0, 16, true, false};
  opts.train.sampler = {16, 2, 0};
  opts.train.loss.margin = 16.0;
  opts.train.clip_threshold = 8.0;
  opts.train.lr = 0.01;
  opts.train.total_epochs = 15;
  opts.train.decay_epoch = 10;
  opts.train.match_gs_iters = true;
  opts.train.eval_every = 4;
  return opts;
}

// 7. First-epoch active fraction, GS vs PK from one initial model.
Outcome informativeness() {
  BenchOptions opts = reference_bench();
  opts.train.total_epochs = 1;
  opts.train.decay_epoch = 1;
  const auto start = Clock::now();
  const auto rows = run_bench(opts);
  const double secs = seconds_since(start);
  std::size_t wins = 0;
  std::string detail;
  for (std::size_t r = 0; r < opts.runs; ++r) {
    const BenchRow& pk = rows[2 * r];
    const BenchRow& gs = rows[2 * r + 1];
    wins += gs.active_frac_epoch1 > pk.active_frac_epoch1 ? 1 : 0;
    detail += fmt(" [seed %llu gs %.3f pk %.3f]", static_cast<unsigned long long>(gs.seed), gs.active_frac_epoch1,
                  pk.active_frac_epoch1);
  }
  return {wins >= 4 && secs < 60.0, fmt("GS > PK in %zu/5 seeds, %.1f s;", wins, secs) + detail};
}

// 8. Held-out mAcc and iterations to PK's final mAP.
Outcome convergence() {
  const BenchOptions opts = reference_bench();
  const auto start = Clock::now();
  const auto rows = run_bench(opts);
  const double secs = seconds_since(start);
  std::size_t macc_wins = 0, speed_wins = 0;
  std::string detail;
  for (std::size_t r = 0; r < opts.runs; ++r) {
    const BenchRow& pk = rows[2 * r];
    const BenchRow& gs = rows[2 * r + 1];
    macc_wins += gs.macc >= pk.macc ? 1 : 0;
    const bool faster = gs.iters_to_target >= 0 && gs.iters_to_target < pk.iters_to_target;
    speed_wins += faster ? 1 : 0;
    detail += fmt(" [seed %llu macc gs %.3f pk %.3f, iters gs %lld pk %lld]", static_cast<unsigned long long>(gs.seed),
                  gs.macc, pk.macc, gs.iters_to_target, pk.iters_to_target);
  }
  return {macc_wins >= 4 && speed_wins >= 4 && secs < 300.0,
          fmt("mAcc GS >= PK in %zu/5, GS faster in %zu/5, %.1f s;", macc_wins, speed_wins, secs) + detail};
}

// 9. GS plan construction vs training time at C=1000. The embedding model
// stands in for the backbone: mlp1 128 -> 256 -> 128. The bare linear map is
// also timed and reported for reference.
double plan_train_ratio(const LabeledFeatureSet& data, const ModelShape& shape, std::string& detail) {
  TrainConfig cfg;
  cfg.sampler = {64, 2, 0};
  cfg.total_epochs = 2;
  cfg.decay_epoch = 2;
  cfg.metric = DistanceKind::kEuclidean;
  cfg.rerank.mode = RerankMode::kKReciprocal;
  const auto result = train(data, EmbeddingModel::random(shape, 9), cfg, SamplerKind::kGs);
  double worst = 0.0;
  for (const EpochRecord& e : result.log.epochs) {
    worst = std::max(worst, e.plan_build_seconds / e.train_seconds);
    detail += fmt(" [epoch %zu plan %.4f s train %.4f s]", e.epoch, e.plan_build_seconds, e.train_seconds);
  }
  return worst;
}

Outcome epoch_cost() {
  SyntheticConfig synth;
  synth.num_classes = 1000;
  synth.num_groups = 50;
  synth.ambient_dim = 128;
  synth.samples_per_class_min = 4;
  synth.samples_per_class_max = 4;
  synth.seed = 9;
  const auto data = generate_synthetic(synth);
  std::string detail, linear_detail;
  const double ratio = plan_train_ratio(data, {ModelKind::kMlp1, 128, 256, 128, true, false}, detail);
  const double linear = plan_train_ratio(data, {ModelKind::kLinear, 128, 0, 128, true, false}, linear_detail);
  return {ratio < 0.10, fmt("mlp1 max plan/train ratio %.2f%%;", 100.0 * ratio) + detail +
                            fmt("; linear 128->128 (reference only) %.2f%%", 100.0 * linear)};
}

// 10. Two identical train invocations give byte-identical metrics.csv.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "gsml_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ostringstream out, err;
  auto run = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "gsml");
    return cli::run(args, out, err);
  };
  const std::string train_file = (dir / "train.csv").string();
  const std::string test_file = (dir / "test.csv").string();
  int rc = run({"gen", "--holdout-classes", "32", "--test-out", test_file, "-o", train_file});
  for (const char* o : {"a", "b"}) {
    rc |= run({"train", "--train", train_file, "--test", test_file, "--sampler", "gs", "--batch-size", "16", "--seed",
               "7", "--eval-every", "16", "-o", (dir / o).string()});
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string a = slurp(dir / "a" / "metrics.csv");
  const std::string b = slurp(dir / "b" / "metrics.csv");
  fs::remove_all(dir);
  const bool ok = rc == 0 && !a.empty() && a == b;
  return {ok, fmt("exit %d, metrics.csv %zu bytes, %s", rc, a.size(), a == b ? "identical" : "different") +
                  (err.str().empty() ? "" : " stderr: " + err.str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1 sampler structure", sampler_structure},
      {"2 graph oracle", graph_oracle},
      {"3 loss oracle", loss_oracle},
      {"4 gradient check", gradient_check},
      {"5 clipping", clipping},
      {"6 evaluation oracle", evaluation_oracle},
      {"7 informativeness", informativeness},
      {"8 convergence", convergence},
      {"9 epoch cost", epoch_cost},
      {"10 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
