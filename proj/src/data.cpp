#include "ecr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace ecr {
namespace {

bool is_separator(char c) { return c == '\t' || c == ',' || c == ' ' || c == '\r'; }

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_separator(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_separator(line[j])) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

template <typename Number>
bool parse_number(std::string_view token, Number& out) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::string line_ref(const std::string& name, std::size_t line_no) {
  return (name.empty() ? std::string("line ") : name + ": line ") + std::to_string(line_no);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<std::vector<std::size_t>> Dataset::class_members() const {
  std::vector<std::vector<std::size_t>> members(num_classes());
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  return members;
}

Dataset parse_ucr(std::string_view content, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  std::vector<double> raw_labels;
  std::map<double, std::string> tokens_by_value;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    if (tokens.size() < 2) {
      throw FormatError(line_ref(ds.name, line_no) + ": expected a class token and at least one value");
    }
    const std::size_t len = tokens.size() - 1;
    if (ds.length == 0) {
      ds.length = len;
    } else if (len != ds.length) {
      throw FormatError(line_ref(ds.name, line_no) + ": row has " + std::to_string(len) +
                        " values, expected " + std::to_string(ds.length));
    }

    double label = 0.0;
    if (!parse_number(tokens[0], label) || !std::isfinite(label)) {
      throw ParseError(line_ref(ds.name, line_no) + ": class token '" + std::string(tokens[0]) +
                       "' is not numeric");
    }
    raw_labels.push_back(label);
    tokens_by_value.emplace(label, std::string(tokens[0]));

    for (std::size_t k = 1; k < tokens.size(); ++k) {
      float v = 0.0f;
      if (!parse_number(tokens[k], v)) {
        throw ParseError(line_ref(ds.name, line_no) + ": value '" + std::string(tokens[k]) +
                         "' is not numeric");
      }
      if (!std::isfinite(v)) {
        throw DataError(line_ref(ds.name, line_no) + ": non-finite value '" +
                        std::string(tokens[k]) + "'");
      }
      ds.values.push_back(v);
    }
    if (nl == content.size()) break;
  }
  if (raw_labels.empty()) throw FormatError(line_ref(ds.name, line_no) + ": no series found");

  std::map<double, int> dense;
  for (const auto& [value, token] : tokens_by_value) {
    dense.emplace(value, static_cast<int>(ds.class_names.size()));
    ds.class_names.push_back(token);
  }
  ds.labels.reserve(raw_labels.size());
  for (double v : raw_labels) ds.labels.push_back(dense.at(v));
  return ds;
}

Dataset load_ucr_file(const std::filesystem::path& path, std::string name) {
  if (name.empty()) name = path.stem().string();
  return parse_ucr(read_file(path), std::move(name));
}

std::string to_ucr_tsv(const Dataset& dataset) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out += dataset.class_names[dataset.labels[i]];
    for (float v : dataset.series(i)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out += '\t';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

void save_ucr_file(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_ucr_tsv(dataset);
}

void align_labels(const Dataset& reference, Dataset& other) {
  std::map<double, int> dense;
  for (std::size_t c = 0; c < reference.class_names.size(); ++c) {
    double v = 0.0;
    parse_number(std::string_view(reference.class_names[c]), v);
    dense.emplace(v, static_cast<int>(c));
  }
  for (int& label : other.labels) {
    double v = 0.0;
    parse_number(std::string_view(other.class_names[label]), v);
    auto it = dense.find(v);
    if (it == dense.end()) {
      throw DataError(other.name + ": class '" + other.class_names[label] +
                      "' does not occur in " + reference.name);
    }
    label = it->second;
  }
  other.class_names = reference.class_names;
}

DatasetSplits load_ucr_dataset(const std::filesystem::path& root, const std::string& name) {
  const auto dir = root / name;
  DatasetSplits splits{load_ucr_file(dir / (name + "_TRAIN.tsv"), name),
                       load_ucr_file(dir / (name + "_TEST.tsv"), name)};
  if (splits.train.length != splits.test.length) {
    throw FormatError(name + ": train length " + std::to_string(splits.train.length) +
                      " differs from test length " + std::to_string(splits.test.length));
  }
  align_labels(splits.train, splits.test);
  return splits;
}

std::filesystem::path data_root_from_env() {
  const char* env = std::getenv("ECR_DATA_ROOT");
  return env ? std::filesystem::path(env) : std::filesystem::path();
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.name = dataset.name;
  out.length = dataset.length;
  std::vector<int> present(dataset.num_classes(), -1);
  for (std::size_t i : indices) present.at(dataset.labels.at(i)) = 0;
  for (std::size_t c = 0; c < present.size(); ++c) {
    if (present[c] == 0) {
      present[c] = static_cast<int>(out.class_names.size());
      out.class_names.push_back(dataset.class_names[c]);
    }
  }
  for (std::size_t i : indices) {
    auto s = dataset.series(i);
    out.values.insert(out.values.end(), s.begin(), s.end());
    out.labels.push_back(present[dataset.labels[i]]);
  }
  return out;
}

Dataset truncate(const Dataset& dataset, std::size_t length) {
  if (length == 0 || length > dataset.length) {
    throw ConfigError("cannot truncate series of length " + std::to_string(dataset.length) +
                      " to " + std::to_string(length));
  }
  Dataset out = dataset;
  out.length = length;
  out.values.clear();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto s = dataset.series(i).first(length);
    out.values.insert(out.values.end(), s.begin(), s.end());
  }
  return out;
}

Tensor<float> gather_series(const Dataset& dataset, std::span<const std::size_t> indices) {
  Tensor<float> out({indices.size(), 1, dataset.length});
  float* dst = out.ptr();
  for (std::size_t i : indices) {
    auto s = dataset.series(i);
    dst = std::copy(s.begin(), s.end(), dst);
  }
  return out;
}

BatchPlan make_batch_plan(const Dataset& dataset, std::size_t classes_requested,
                          std::size_t samples_requested, std::uint64_t seed) {
  if (classes_requested < 2 || samples_requested < 2) {
    throw ConfigError("batch plan needs at least 2 classes and 2 samples per class");
  }
  if (dataset.num_classes() < 2) {
    throw UnsupportedDatasetError(dataset.name + ": at least two classes are required");
  }
  BatchPlan plan;
  plan.seed = seed;
  plan.classes_per_batch = std::min(classes_requested, dataset.num_classes());
  const std::size_t requested = classes_requested * samples_requested;
  plan.samples_per_class = (requested + plan.classes_per_batch - 1) / plan.classes_per_batch;
  plan.batches_per_epoch = std::max<std::size_t>(1, dataset.size() / plan.batch_size());
  return plan;
}

std::vector<std::vector<std::size_t>> sample_batch_indices(const Dataset& dataset,
                                                           const BatchPlan& plan,
                                                           std::uint64_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(plan.seed), static_cast<std::uint32_t>(plan.seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    0x5eedu};
  std::mt19937_64 rng(seq);
  auto uniform = [&rng](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  // Partial Fisher-Yates: the first k entries become a uniform k-subset.
  auto choose = [&uniform](std::vector<std::size_t>& pool, std::size_t k) {
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform(pool.size() - i)]);
  };

  const auto members = dataset.class_members();
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve(plan.batches_per_epoch);
  for (std::size_t b = 0; b < plan.batches_per_epoch; ++b) {
    std::vector<std::size_t> classes(dataset.num_classes());
    std::iota(classes.begin(), classes.end(), std::size_t{0});
    choose(classes, plan.classes_per_batch);

    std::vector<std::size_t> batch;
    batch.reserve(plan.batch_size());
    for (std::size_t ci = 0; ci < plan.classes_per_batch; ++ci) {
      std::vector<std::size_t> pool = members[classes[ci]];
      if (pool.size() >= plan.samples_per_class) {
        choose(pool, plan.samples_per_class);
        batch.insert(batch.end(), pool.begin(), pool.begin() + plan.samples_per_class);
      } else {
        for (std::size_t k = 0; k < plan.samples_per_class; ++k) batch.push_back(pool[uniform(pool.size())]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<Batch> sample_batches(const Dataset& dataset, const BatchPlan& plan, std::uint64_t epoch) {
  std::vector<Batch> out;
  for (auto& indices : sample_batch_indices(dataset, plan, epoch)) {
    Batch batch;
    batch.series = gather_series(dataset, indices);
    for (std::size_t i : indices) batch.labels.push_back(dataset.labels[i]);
    batch.indices = std::move(indices);
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace ecr
