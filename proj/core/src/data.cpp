#include "gsml/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

#include "gsml/error.hpp"
#include "gsml/random.hpp"

namespace gsml {

std::size_t LabeledFeatureSet::num_classes() const {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

void validate(const LabeledFeatureSet& set) {
  const std::size_t n = set.labels.size();
  if (set.features.rows() != n) {
    throw ValidationError("feature rows (" + std::to_string(set.features.rows()) +
                          ") do not match label count (" + std::to_string(n) + ")");
  }
  if (n == 0) throw ValidationError("feature set is empty");
  if (set.features.cols() == 0) throw ValidationError("feature dimension is zero");
  std::vector<std::size_t> counts;
  for (int label : set.labels) {
    if (label < 0) throw ValidationError("negative class id " + std::to_string(label));
    if (static_cast<std::size_t>(label) >= counts.size()) counts.resize(label + 1, 0);
    ++counts[label];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw ValidationError("class ids are not contiguous: id " + std::to_string(c) + " is missing");
    }
  }
  if (counts.size() < 2) throw ValidationError("at least 2 classes are required");
  if (!set.features.all_finite()) throw ValidationError("features contain non-finite values");
  if (!set.original_ids.empty() && set.original_ids.size() != counts.size()) {
    throw ValidationError("original_ids length does not match class count");
  }
}

DatasetIndex build_index(const LabeledFeatureSet& set) {
  validate(set);
  DatasetIndex index;
  for (std::size_t i = 0; i < set.labels.size(); ++i) index.index_dict[set.labels[i]].push_back(i);
  index.pids.reserve(index.index_dict.size());
  for (const auto& [pid, members] : index.index_dict) index.pids.push_back(pid);
  return index;
}

void validate(const SyntheticConfig& cfg) {
  if (cfg.num_groups < 1) throw ConfigError("num_groups must be >= 1");
  if (cfg.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (cfg.num_classes < cfg.num_groups) throw ConfigError("num_classes must be >= num_groups");
  if (cfg.samples_per_class_min < 1) throw ConfigError("samples_per_class_min must be >= 1");
  if (cfg.samples_per_class_max < cfg.samples_per_class_min) {
    throw ConfigError("samples_per_class_max must be >= samples_per_class_min");
  }
  if (cfg.ambient_dim < 1) throw ConfigError("ambient_dim must be >= 1");
  if (cfg.nuisance_dims >= cfg.ambient_dim && cfg.nuisance_dims > 0) {
    throw ConfigError("nuisance_dims must be smaller than ambient_dim");
  }
  auto check_scale = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string(name) + " must be finite and >= 0");
  };
  check_scale(cfg.group_center_scale, "group_center_scale");
  check_scale(cfg.class_center_scale, "class_center_scale");
  check_scale(cfg.within_class_sigma, "within_class_sigma");
  check_scale(cfg.nuisance_sigma, "nuisance_sigma");
}

LabeledFeatureSet generate_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t d = cfg.ambient_dim;
  const std::size_t informative = d - cfg.nuisance_dims;

  Matrix groups(cfg.num_groups, d);
  for (std::size_t g = 0; g < cfg.num_groups; ++g) {
    for (std::size_t j = 0; j < informative; ++j) groups(g, j) = cfg.group_center_scale * gauss(rng);
  }
  Matrix centers(cfg.num_classes, d);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    const std::size_t g = c % cfg.num_groups;
    for (std::size_t j = 0; j < informative; ++j) {
      centers(c, j) = groups(g, j) + cfg.class_center_scale * gauss(rng);
    }
  }
  std::uniform_int_distribution<std::size_t> count_dist(cfg.samples_per_class_min,
                                                        cfg.samples_per_class_max);
  std::vector<std::size_t> counts(cfg.num_classes);
  std::size_t total = 0;
  for (auto& n : counts) total += (n = count_dist(rng));

  LabeledFeatureSet set;
  set.features = Matrix(total, d);
  set.labels.reserve(total);
  std::size_t row = 0;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    for (std::size_t s = 0; s < counts[c]; ++s, ++row) {
      for (std::size_t j = 0; j < d; ++j) {
        double v = centers(c, j) + cfg.within_class_sigma * gauss(rng);
        if (j >= informative) v += cfg.nuisance_sigma * gauss(rng);
        set.features(row, j) = v;
      }
      set.labels.push_back(static_cast<int>(c));
    }
  }
  return set;
}

namespace {

long long original_id(const LabeledFeatureSet& set, int label) {
  return set.original_ids.empty() ? label : set.original_ids[label];
}

}  // namespace

LabeledFeatureSet subset_rows(const LabeledFeatureSet& set, const std::vector<std::size_t>& rows) {
  std::vector<int> present;
  for (std::size_t r : rows) present.push_back(set.labels[r]);
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  std::vector<int> remap(set.num_classes(), -1);
  LabeledFeatureSet out;
  for (std::size_t i = 0; i < present.size(); ++i) {
    remap[present[i]] = static_cast<int>(i);
    out.original_ids.push_back(original_id(set, present[i]));
  }
  out.features = set.features.gather_rows(rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(remap[set.labels[r]]);
  return out;
}

std::pair<LabeledFeatureSet, LabeledFeatureSet> split_by_class(const LabeledFeatureSet& set,
                                                               std::size_t held_out,
                                                               std::uint64_t seed) {
  validate(set);
  const std::size_t c = set.num_classes();
  if (held_out < 2 || held_out + 2 > c) {
    throw ValidationError("held-out class count must be in [2, C-2]; got " + std::to_string(held_out) +
                          " of " + std::to_string(c));
  }
  Rng rng(seed);
  std::vector<bool> is_held(c, false);
  for (std::size_t k : sample_without_replacement(c, held_out, rng)) is_held[k] = true;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  for (std::size_t i = 0; i < set.size(); ++i) {
    (is_held[set.labels[i]] ? test_rows : train_rows).push_back(i);
  }
  return {subset_rows(set, train_rows), subset_rows(set, test_rows)};
}

std::string serialize_featureset(const LabeledFeatureSet& set) {
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "# d_in=%zu C=%zu N=%zu\n", set.dim(), set.num_classes(), set.size());
  out += buf;
  for (std::size_t i = 0; i < set.size(); ++i) {
    out += std::to_string(original_id(set, set.labels[i]));
    for (double v : set.features.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

LabeledFeatureSet parse_featureset(const std::string& text, const std::string& source) {
  std::vector<long long> raw_labels;
  std::vector<double> values;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    std::size_t fields = 0;
    long long label = 0;
    while (true) {
      const std::size_t comma = view.find(',');
      std::string_view field = trim(view.substr(0, comma));
      if (fields == 0) {
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), label);
        if (ec != std::errc() || ptr != field.data() + field.size() || label < 0) {
          throw ParseError(source, line_no, "label '" + std::string(field) + "' is not a non-negative integer");
        }
      } else {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
          throw ParseError(source, line_no, "value '" + std::string(field) + "' is not a number");
        }
        values.push_back(v);
      }
      ++fields;
      if (comma == std::string_view::npos) break;
      view.remove_prefix(comma + 1);
    }
    if (fields < 2) throw ParseError(source, line_no, "row has no feature values");
    if (dim == 0) {
      dim = fields - 1;
    } else if (fields - 1 != dim) {
      throw ParseError(source, line_no, "row has " + std::to_string(fields - 1) + " values, expected " +
                                            std::to_string(dim));
    }
    raw_labels.push_back(label);
  }
  if (raw_labels.empty()) throw ValidationError(source + ": no samples found");

  LabeledFeatureSet set;
  set.original_ids = raw_labels;
  std::sort(set.original_ids.begin(), set.original_ids.end());
  set.original_ids.erase(std::unique(set.original_ids.begin(), set.original_ids.end()),
                         set.original_ids.end());
  set.labels.reserve(raw_labels.size());
  for (long long raw : raw_labels) {
    auto it = std::lower_bound(set.original_ids.begin(), set.original_ids.end(), raw);
    set.labels.push_back(static_cast<int>(it - set.original_ids.begin()));
  }
  set.features = Matrix(raw_labels.size(), dim, std::move(values));
  validate(set);
  return set;
}

void save_featureset(const LabeledFeatureSet& set, const std::filesystem::path& path) {
  validate(set);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << serialize_featureset(set);
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

LabeledFeatureSet load_featureset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_featureset(buf.str(), path.string());
}

std::uint64_t content_hash(const LabeledFeatureSet& set) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_featureset(set)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace gsml
