#include "ecr/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <sstream>

namespace ecr {

const char* branch_name(Branch branch) { return branch == Branch::Cls ? "cls" : "ret"; }

Tensor<float> embed(Backbone<float>& backbone, const Dataset& dataset, std::size_t chunk) {
  const std::size_t n = dataset.size(), d = backbone.config().embedding_dim();
  Tensor<float> out({n, d});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t stop = std::min(n, start + chunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Tensor<float> f = l2_normalize(backbone.forward(gather_series(dataset, idx), Mode::Eval));
    std::copy(f.data().begin(), f.data().end(), out.ptr() + start * d);
  }
  return out;
}

FeatureLibrary build_library(EcrModel& model, Branch branch, const Dataset& train) {
  Backbone<float>& bb = branch == Branch::Cls ? model.cls : model.ret;
  Tensor<float> f = embed(bb, train);
  FeatureLibrary lib;
  lib.branch = branch;
  lib.dim = f.dim(1);
  lib.features.assign(f.data().begin(), f.data().end());
  lib.labels = train.labels;
  return lib;
}

void save_library(const FeatureLibrary& lib, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little);
  std::string bytes("ECRLIB1\0", 8);
  auto put = [&bytes](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); };
  const std::uint64_t n = lib.size(), d = lib.dim;
  const std::uint8_t tag = lib.branch == Branch::Cls ? 0 : 1;
  put(&n, 8);
  put(&d, 8);
  put(&tag, 1);
  for (int l : lib.labels) {
    const std::int32_t v = l;
    put(&v, 4);
  }
  put(lib.features.data(), lib.features.size() * sizeof(float));
  write_file_atomic(path, bytes);
}

FeatureLibrary load_library(const std::filesystem::path& path) {
  const std::string bytes = read_binary_file(path);
  std::size_t pos = 0;
  auto get = [&](void* dst, std::size_t n) {
    if (bytes.size() - pos < n) throw FormatError(path.string() + ": library file truncated");
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  };
  char magic[8];
  get(magic, 8);
  if (std::memcmp(magic, "ECRLIB1\0", 8) != 0) throw FormatError(path.string() + ": not a feature library");
  std::uint64_t n = 0, d = 0;
  std::uint8_t tag = 0;
  get(&n, 8);
  get(&d, 8);
  get(&tag, 1);
  if (tag > 1) throw FormatError(path.string() + ": unknown branch tag");
  if (n > bytes.size() || d > bytes.size()) throw FormatError(path.string() + ": implausible header");
  FeatureLibrary lib;
  lib.branch = tag == 0 ? Branch::Cls : Branch::Ret;
  lib.dim = d;
  lib.labels.resize(n);
  for (auto& l : lib.labels) {
    std::int32_t v;
    get(&v, 4);
    l = v;
  }
  lib.features.resize(n * d);
  get(lib.features.data(), lib.features.size() * sizeof(float));
  if (pos != bytes.size()) throw FormatError(path.string() + ": trailing bytes");
  return lib;
}

DistanceSet distances(std::span<const float> query, const FeatureLibrary& lib) {
  if (query.size() != lib.dim) {
    throw ShapeError("distances: query of dimension " + std::to_string(query.size()) +
                     " against library of dimension " + std::to_string(lib.dim));
  }
  DistanceSet out(lib.size());
  for (std::size_t j = 0; j < lib.size(); ++j) {
    const float* row = lib.features.data() + j * lib.dim;
    double sq = 0.0;
    for (std::size_t k = 0; k < lib.dim; ++k) {
      const double diff = static_cast<double>(query[k]) - row[k];
      sq += diff * diff;
    }
    out[j] = static_cast<float>(std::sqrt(sq));
  }
  return out;
}

DistanceSet ecr_fuse(std::span<const float> d_cls, std::span<const float> d_ret) {
  if (d_cls.size() != d_ret.size()) {
    throw ShapeError("ecr_fuse: distance sets of length " + std::to_string(d_cls.size()) + " and " +
                     std::to_string(d_ret.size()));
  }
  DistanceSet out(d_cls.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = (d_cls[j] + d_ret[j]) / 2.0f;
  return out;
}

int predict_1nn(std::span<const float> d, std::span<const int> labels) {
  if (d.empty()) throw ShapeError("predict_1nn: empty library");
  if (d.size() != labels.size()) throw ShapeError("predict_1nn: distance/label count mismatch");
  std::size_t best = 0;
  for (std::size_t j = 1; j < d.size(); ++j) {
    if (d[j] < d[best]) best = j;
  }
  return labels[best];
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
  if (values.empty()) throw ShapeError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

template std::size_t argmax<float>(std::span<const float>);
template std::size_t argmax<double>(std::span<const double>);

int predict_softmax_head(EcrModel& model, std::span<const float> series) {
  Tensor<float> x({1, 1, series.size()}, std::vector<float>(series.begin(), series.end()));
  Tensor<float> logits = model.head.forward(model.cls.forward(x, Mode::Eval));
  return static_cast<int>(argmax<float>(logits.data()));
}

std::vector<double> class_probabilities(std::span<const float> d, std::span<const int> labels,
                                        std::size_t num_classes, double temperature) {
  if (d.size() != labels.size()) throw ShapeError("class_probabilities: distance/label count mismatch");
  if (d.empty()) throw ShapeError("class_probabilities: empty library");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> nearest(num_classes, inf);
  for (std::size_t j = 0; j < d.size(); ++j) {
    const auto c = static_cast<std::size_t>(labels[j]);
    if (c >= num_classes) throw ShapeError("class_probabilities: label out of range");
    nearest[c] = std::min(nearest[c], static_cast<double>(d[j]));
  }
  const double smin = *std::min_element(nearest.begin(), nearest.end());
  std::vector<double> probs(num_classes, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (nearest[c] == inf) continue;
    probs[c] = std::exp(-(nearest[c] - smin) / temperature);
    total += probs[c];
  }
  for (auto& p : probs) p /= total;
  return probs;
}

int ecrtime_predict(const std::vector<std::vector<double>>& per_model) {
  if (per_model.empty()) throw ShapeError("ecrtime_predict: no models");
  const std::size_t classes = per_model.front().size();
  std::vector<double> mean(classes, 0.0);
  for (const auto& p : per_model) {
    if (p.size() != classes) throw ShapeError("ecrtime_predict: probability vectors differ in length");
    for (std::size_t c = 0; c < classes; ++c) mean[c] += p[c];
  }
  for (auto& m : mean) m /= static_cast<double>(per_model.size());
  return static_cast<int>(argmax(std::span<const double>(mean)));
}

int ecrtime_predict_votes(const std::vector<std::vector<double>>& per_model) {
  if (per_model.empty()) throw ShapeError("ecrtime_predict_votes: no models");
  std::vector<std::vector<double>> votes;
  for (const auto& p : per_model) {
    std::vector<double> v(p.size(), 0.0);
    v[argmax(std::span<const double>(p))] = 1.0;
    votes.push_back(std::move(v));
  }
  return ecrtime_predict(votes);
}

namespace {

struct BranchLibraries {
  FeatureLibrary cls;
  FeatureLibrary ret;
  Tensor<float> query_cls;
  Tensor<float> query_ret;
};

BranchLibraries prepare(EcrModel& model, const Dataset& train, const Dataset& test) {
  if (train.length != test.length) throw ShapeError("train and test series lengths differ");
  return {build_library(model, Branch::Cls, train), build_library(model, Branch::Ret, train),
          embed(model.cls, test), embed(model.ret, test)};
}

std::span<const float> row_of(const Tensor<float>& t, std::size_t i) {
  return t.data().subspan(i * t.dim(1), t.dim(1));
}

DistanceSet fused_distances(const BranchLibraries& libs, std::size_t i) {
  return ecr_fuse(distances(row_of(libs.query_cls, i), libs.cls),
                  distances(row_of(libs.query_ret, i), libs.ret));
}

}  // namespace

std::vector<Prediction> predict_dataset(EcrModel& model, const Dataset& train, const Dataset& test,
                                        InferenceMode mode) {
  std::vector<Prediction> preds(test.size());
  if (mode == InferenceMode::Softmax) {
    std::vector<std::size_t> idx(test.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t chunk = 64;
    for (std::size_t start = 0; start < test.size(); start += chunk) {
      const std::size_t stop = std::min(test.size(), start + chunk);
      auto part = std::span<const std::size_t>(idx).subspan(start, stop - start);
      Tensor<float> logits = model.head.forward(model.cls.forward(gather_series(test, part), Mode::Eval));
      const std::size_t c = logits.dim(1);
      for (std::size_t i = start; i < stop; ++i) {
        preds[i] = {i, test.labels[i],
                    static_cast<int>(argmax<float>(logits.data().subspan((i - start) * c, c))),
                    std::numeric_limits<double>::quiet_NaN()};
      }
    }
    return preds;
  }

  const auto libs = prepare(model, train, test);
  for (std::size_t i = 0; i < test.size(); ++i) {
    DistanceSet d;
    switch (mode) {
      case InferenceMode::ClsOnly: d = distances(row_of(libs.query_cls, i), libs.cls); break;
      case InferenceMode::RetOnly: d = distances(row_of(libs.query_ret, i), libs.ret); break;
      default: d = fused_distances(libs, i); break;
    }
    preds[i] = {i, test.labels[i], predict_1nn(d, train.labels),
                *std::min_element(d.begin(), d.end())};
  }
  return preds;
}

std::vector<Prediction> ecrtime_predict_dataset(std::vector<EcrModel*> models, const Dataset& train,
                                                const Dataset& test, EnsembleVoting voting,
                                                double temperature) {
  if (models.empty()) throw ShapeError("ecrtime: no models");
  // A single member is the ECR itself. Going through the softmin would agree
  // everywhere except on exact cross-class distance ties, which 1-NN resolves
  // by library index and argmax by class id.
  if (models.size() == 1) return predict_dataset(*models.front(), train, test, InferenceMode::Ecr);
  std::vector<BranchLibraries> libs;
  for (EcrModel* m : models) libs.push_back(prepare(*m, train, test));
  std::vector<Prediction> preds(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::vector<std::vector<double>> probs;
    double nearest = 0.0;
    for (const auto& l : libs) {
      const DistanceSet d = fused_distances(l, i);
      probs.push_back(class_probabilities(d, train.labels, train.num_classes(), temperature));
      nearest += *std::min_element(d.begin(), d.end());
    }
    const int p = voting == EnsembleVoting::Probability ? ecrtime_predict(probs)
                                                        : ecrtime_predict_votes(probs);
    preds[i] = {i, test.labels[i], p, nearest / static_cast<double>(libs.size())};
  }
  return preds;
}

double accuracy(const std::vector<Prediction>& predictions) {
  if (predictions.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& p : predictions) correct += p.predicted == p.true_label;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::string predictions_csv(const std::vector<Prediction>& predictions,
                            const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os.precision(9);
  os << "index,true_label,predicted_label,nearest_distance\n";
  for (const auto& p : predictions) {
    os << p.index << ',' << class_names.at(p.true_label) << ',' << class_names.at(p.predicted) << ',';
    if (!std::isnan(p.nearest_distance)) os << p.nearest_distance;
    os << '\n';
  }
  return os.str();
}

std::vector<Prediction> euclidean_1nn(const Dataset& train, const Dataset& test) {
  if (train.length != test.length) throw ShapeError("train and test series lengths differ");
  std::vector<Prediction> preds(test.size());
  DistanceSet d(train.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto q = test.series(i);
    for (std::size_t j = 0; j < train.size(); ++j) {
      auto r = train.series(j);
      double sq = 0.0;
      for (std::size_t t = 0; t < q.size(); ++t) {
        const double diff = static_cast<double>(q[t]) - r[t];
        sq += diff * diff;
      }
      d[j] = static_cast<float>(std::sqrt(sq));
    }
    preds[i] = {i, test.labels[i], predict_1nn(d, train.labels),
                *std::min_element(d.begin(), d.end())};
  }
  return preds;
}

}  // namespace ecr
