#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ecr/data.hpp"
#include "ecr/training.hpp"

namespace ecr {

enum class Branch { Cls, Ret };

const char* branch_name(Branch branch);

// Unit-norm embeddings of every training series, in dataset order.
struct FeatureLibrary {
  Branch branch = Branch::Cls;
  std::size_t dim = 0;
  std::vector<float> features;  // size() x dim
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(features).subspan(i * dim, dim);
  }
};

// Euclidean distance from one query to every library row.
using DistanceSet = std::vector<float>;

// L2-normalized eval-mode embeddings [N x d] of every series of `dataset`.
Tensor<float> embed(Backbone<float>& backbone, const Dataset& dataset, std::size_t chunk = 64);

FeatureLibrary build_library(EcrModel& model, Branch branch, const Dataset& train);

// Library file: "ECRLIB1\0", u64 N, u64 d, u8 branch (0 cls, 1 ret),
// i32 labels[N], f32 features[N*d]; little-endian.
void save_library(const FeatureLibrary& lib, const std::filesystem::path& path);
FeatureLibrary load_library(const std::filesystem::path& path);

DistanceSet distances(std::span<const float> query, const FeatureLibrary& lib);

// Elementwise mean of two distance sets over the same library ordering.
DistanceSet ecr_fuse(std::span<const float> d_cls, std::span<const float> d_ret);

// Label of the smallest distance; ties go to the lowest index.
int predict_1nn(std::span<const float> d, std::span<const int> labels);

// Index of the largest value; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values);

// FC-head argmax of the classification branch for a single series.
int predict_softmax_head(EcrModel& model, std::span<const float> series);

inline constexpr double kDefaultTemperature = 0.1;

// Softmin over per-class minimum distances: p_c proportional to
// exp(-s_c / temperature) with s_c the smallest distance among class c's
// library entries. Classes absent from the library get probability 0.
std::vector<double> class_probabilities(std::span<const float> d, std::span<const int> labels,
                                        std::size_t num_classes,
                                        double temperature = kDefaultTemperature);

// Argmax of the mean of the per-model probability vectors.
int ecrtime_predict(const std::vector<std::vector<double>>& per_model);

// Alternative: each model votes one-hot for its argmax; the votes are averaged.
int ecrtime_predict_votes(const std::vector<std::vector<double>>& per_model);

enum class InferenceMode { Ecr, ClsOnly, RetOnly, Softmax };

struct Prediction {
  std::size_t index = 0;
  int true_label = 0;
  int predicted = 0;
  double nearest_distance = 0.0;  // NaN where no distance is involved
};

// Libraries are built from `train`; every series of `test` is classified.
std::vector<Prediction> predict_dataset(EcrModel& model, const Dataset& train, const Dataset& test,
                                        InferenceMode mode);

enum class EnsembleVoting { Probability, HardVote };

// Averages per-model class probabilities over the ensemble. A one-model
// ensemble returns exactly the fused 1-NN predictions of that model.
std::vector<Prediction> ecrtime_predict_dataset(std::vector<EcrModel*> models, const Dataset& train,
                                                const Dataset& test,
                                                EnsembleVoting voting = EnsembleVoting::Probability,
                                                double temperature = kDefaultTemperature);

double accuracy(const std::vector<Prediction>& predictions);

// "index,true_label,predicted_label,nearest_distance", labels as original class tokens.
std::string predictions_csv(const std::vector<Prediction>& predictions,
                            const std::vector<std::string>& class_names);

// Raw-series 1-NN with Euclidean distance, the classical baseline.
std::vector<Prediction> euclidean_1nn(const Dataset& train, const Dataset& test);

}  // namespace ecr
