#include "gsml/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "gsml/error.hpp"
#include "gsml/random.hpp"

namespace gsml {

ModelKind parse_model_kind(std::string_view name) {
  if (name == "linear") return ModelKind::kLinear;
  if (name == "mlp1") return ModelKind::kMlp1;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected linear|mlp1)");
}

std::string_view to_string(ModelKind kind) { return kind == ModelKind::kLinear ? "linear" : "mlp1"; }

void validate(const ModelShape& shape) {
  if (shape.d_in < 1) throw ConfigError("model input dimension must be >= 1");
  if (shape.d_out < 2) throw ConfigError("model output dimension must be >= 2");
  if (shape.kind == ModelKind::kMlp1 && shape.d_hidden < 1) {
    throw ConfigError("mlp1 model needs a hidden width >= 1");
  }
}

namespace {

// Offsets of each parameter block inside the flat vector.
struct Layout {
  std::size_t l1_out, l1_in, l2_out, l2_in;
  std::size_t w1, b1, w2, b2, end;

  explicit Layout(const ModelShape& s) {
    const bool mlp = s.kind == ModelKind::kMlp1;
    l1_out = mlp ? s.d_hidden : s.d_out;
    l1_in = s.d_in;
    l2_out = mlp ? s.d_out : 0;
    l2_in = mlp ? s.d_hidden : 0;
    const std::size_t bias = s.bias ? 1 : 0;
    w1 = 0;
    b1 = w1 + l1_out * l1_in;
    w2 = b1 + bias * l1_out;
    b2 = w2 + l2_out * l2_in;
    end = b2 + bias * l2_out;
  }
};

// out = x W^T (+ b); W stored row-major out x in.
Matrix affine(const Matrix& x, std::span<const double> w, const double* b, std::size_t out_dim) {
  const std::size_t in_dim = x.cols();
  Matrix out(x.rows(), out_dim);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = b ? b[o] : 0.0;
      const double* wr = w.data() + o * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) s += wr[i] * xr[i];
      out(r, o) = s;
    }
  }
  return out;
}

// Accumulates dW = g^T x and db = column sums of g.
void affine_backward(const Matrix& x, const Matrix& g, double* dw, double* db) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto gr = g.row(r);
    for (std::size_t o = 0; o < g.cols(); ++o) {
      const double go = gr[o];
      if (go == 0.0) continue;
      double* wr = dw + o * x.cols();
      for (std::size_t i = 0; i < x.cols(); ++i) wr[i] += go * xr[i];
      if (db) db[o] += go;
    }
  }
}

}  // namespace

EmbeddingModel::EmbeddingModel(const ModelShape& shape) : shape_(shape) {
  validate(shape);
  params_.assign(Layout(shape).end, 0.0);
}

EmbeddingModel EmbeddingModel::random(const ModelShape& shape, std::uint64_t seed) {
  EmbeddingModel model(shape);
  const Layout lay(shape);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(lay.l1_in));
  for (std::size_t i = lay.w1; i < lay.b1; ++i) model.params_[i] = s1 * gauss(rng);
  if (lay.l2_in > 0) {
    const double s2 = 1.0 / std::sqrt(static_cast<double>(lay.l2_in));
    for (std::size_t i = lay.w2; i < lay.b2; ++i) model.params_[i] = s2 * gauss(rng);
  }
  return model;
}

Matrix EmbeddingModel::w1() const {
  const Layout lay(shape_);
  return Matrix(lay.l1_out, lay.l1_in,
                std::vector<double>(params_.begin() + lay.w1, params_.begin() + lay.b1));
}

Matrix EmbeddingModel::w2() const {
  const Layout lay(shape_);
  return Matrix(lay.l2_out, lay.l2_in,
                std::vector<double>(params_.begin() + lay.w2, params_.begin() + lay.b2));
}

ForwardCache forward_cached(const EmbeddingModel& model, const Matrix& x) {
  const ModelShape& s = model.shape();
  if (x.cols() != s.d_in) {
    throw ValidationError("model expects " + std::to_string(s.d_in) + " input features, got " +
                          std::to_string(x.cols()));
  }
  const Layout lay(s);
  auto p = model.parameters();
  ForwardCache cache;
  cache.input = x;
  const double* b1 = s.bias ? p.data() + lay.b1 : nullptr;
  if (s.kind == ModelKind::kLinear) {
    cache.output_pre = affine(x, p.subspan(lay.w1, lay.b1 - lay.w1), b1, lay.l1_out);
  } else {
    cache.hidden_pre = affine(x, p.subspan(lay.w1, lay.b1 - lay.w1), b1, lay.l1_out);
    cache.hidden = cache.hidden_pre;
    for (double& v : cache.hidden.values()) v = v > 0.0 ? v : 0.0;
    const double* b2 = s.bias ? p.data() + lay.b2 : nullptr;
    cache.output_pre = affine(cache.hidden, p.subspan(lay.w2, lay.b2 - lay.w2), b2, lay.l2_out);
  }
  cache.output = cache.output_pre;
  if (s.l2_normalize_output) {
    for (std::size_t r = 0; r < cache.output.rows(); ++r) {
      auto row = cache.output.row(r);
      const double n = norm2(row);
      if (n > 0.0) {
        for (double& v : row) v /= n;
      }
    }
  }
  return cache;
}

Matrix forward(const EmbeddingModel& model, const Matrix& x) {
  return std::move(forward_cached(model, x).output);
}

std::vector<double> backward(const EmbeddingModel& model, const ForwardCache& cache,
                             const Matrix& grad_output) {
  const ModelShape& s = model.shape();
  const Layout lay(s);
  std::vector<double> grad(lay.end, 0.0);
  Matrix g = grad_output;
  if (s.l2_normalize_output) {
    // d(z/|z|) = (I - y y^T) / |z|
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      auto y = cache.output.row(r);
      const double n = norm2(cache.output_pre.row(r));
      if (n == 0.0) {
        std::fill(gr.begin(), gr.end(), 0.0);
        continue;
      }
      const double proj = dot(y, gr);
      for (std::size_t k = 0; k < gr.size(); ++k) gr[k] = (gr[k] - y[k] * proj) / n;
    }
  }
  if (s.kind == ModelKind::kLinear) {
    affine_backward(cache.input, g, grad.data() + lay.w1, s.bias ? grad.data() + lay.b1 : nullptr);
    return grad;
  }
  affine_backward(cache.hidden, g, grad.data() + lay.w2, s.bias ? grad.data() + lay.b2 : nullptr);
  auto p = model.parameters();
  Matrix gh(g.rows(), lay.l1_out);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t o = 0; o < lay.l2_out; ++o) {
      const double go = g(r, o);
      if (go == 0.0) continue;
      const double* wr = p.data() + lay.w2 + o * lay.l2_in;
      for (std::size_t h = 0; h < lay.l2_in; ++h) gh(r, h) += go * wr[h];
    }
    for (std::size_t h = 0; h < lay.l1_out; ++h) {
      if (cache.hidden_pre(r, h) <= 0.0) gh(r, h) = 0.0;
    }
  }
  affine_backward(cache.input, gh, grad.data() + lay.w1, s.bias ? grad.data() + lay.b1 : nullptr);
  return grad;
}

void save_model(const EmbeddingModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  const ModelShape& s = model.shape();
  out << "gsml-model 1\n"
      << "kind " << to_string(s.kind) << '\n'
      << "d_in " << s.d_in << '\n'
      << "d_hidden " << s.d_hidden << '\n'
      << "d_out " << s.d_out << '\n'
      << "bias " << (s.bias ? 1 : 0) << '\n'
      << "l2_normalize " << (s.l2_normalize_output ? 1 : 0) << '\n'
      << "parameters " << model.num_parameters() << '\n';
  char buf[32];
  for (double v : model.parameters()) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out << buf;
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

EmbeddingModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  std::size_t line_no = 0;
  std::string line;
  auto next = [&](const std::string& key) {
    if (!std::getline(in, line)) throw ParseError(path.string(), line_no + 1, "unexpected end of file");
    ++line_no;
    std::istringstream fields(line);
    std::string name;
    std::string value;
    fields >> name >> value;
    if (name != key || value.empty()) {
      throw ParseError(path.string(), line_no, "expected '" + key + " <value>'");
    }
    return value;
  };
  if (next("gsml-model") != "1") throw ParseError(path.string(), 1, "unsupported checkpoint version");
  ModelShape shape;
  try {
    shape.kind = parse_model_kind(next("kind"));
    shape.d_in = std::stoul(next("d_in"));
    shape.d_hidden = std::stoul(next("d_hidden"));
    shape.d_out = std::stoul(next("d_out"));
    shape.bias = next("bias") == "1";
    shape.l2_normalize_output = next("l2_normalize") == "1";
  } catch (const std::logic_error&) {
    throw ParseError(path.string(), line_no, "invalid header value");
  }
  EmbeddingModel model(shape);
  const std::size_t count = std::stoul(next("parameters"));
  if (count != model.num_parameters()) {
    throw ParseError(path.string(), line_no, "parameter count does not match the model shape");
  }
  for (double& v : model.parameters()) {
    if (!std::getline(in, line)) throw ParseError(path.string(), line_no + 1, "missing parameter values");
    ++line_no;
    char* end = nullptr;
    v = std::strtod(line.c_str(), &end);
    if (end == line.c_str()) throw ParseError(path.string(), line_no, "invalid parameter value");
  }
  return model;
}

}  // namespace gsml
