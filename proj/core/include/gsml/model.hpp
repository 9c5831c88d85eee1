#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "gsml/matrix.hpp"

namespace gsml {

enum class ModelKind { kLinear, kMlp1 };

ModelKind parse_model_kind(std::string_view name);
std::string_view to_string(ModelKind kind);

struct ModelShape {
  ModelKind kind = ModelKind::kLinear;
  std::size_t d_in = 0;
  std::size_t d_hidden = 0;  // mlp1 only
  std::size_t d_out = 16;
  bool bias = true;
  bool l2_normalize_output = false;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// Embedding map f(x). linear: W1 x + b1. mlp1: W2 relu(W1 x + b1) + b2.
// Parameters are laid out flat as W1, b1, [W2, b2] (biases only when enabled).
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  explicit EmbeddingModel(const ModelShape& shape);

  // Gaussian init with std 1/sqrt(fan_in); biases start at zero.
  static EmbeddingModel random(const ModelShape& shape, std::uint64_t seed);

  const ModelShape& shape() const noexcept { return shape_; }
  std::size_t num_parameters() const noexcept { return params_.size(); }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  Matrix w1() const;
  Matrix w2() const;

  friend bool operator==(const EmbeddingModel&, const EmbeddingModel&) = default;

 private:
  ModelShape shape_;
  std::vector<double> params_;
};

void validate(const ModelShape& shape);

// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardCache {
  Matrix input;
  Matrix hidden_pre;   // mlp1 only
  Matrix hidden;       // mlp1 only
  Matrix output_pre;   // before optional L2 normalization
  Matrix output;
};

Matrix forward(const EmbeddingModel& model, const Matrix& x);
ForwardCache forward_cached(const EmbeddingModel& model, const Matrix& x);

// Gradient w.r.t. the flat parameter vector given d loss / d output.
std::vector<double> backward(const EmbeddingModel& model, const ForwardCache& cache,
                             const Matrix& grad_output);

void save_model(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel load_model(const std::filesystem::path& path);

}  // namespace gsml
