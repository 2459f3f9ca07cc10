#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecr/tensor.hpp"

namespace ecr {

// Labeled collection of equal-length univariate series.
//
// Labels are dense ids 0..num_classes()-1 assigned in ascending order of the
// original numeric class value; class_names keeps the original token.
struct Dataset {
  std::string name;
  std::size_t length = 0;
  std::vector<float> values;  // size() x length, row-major
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::span<const float> series(std::size_t i) const {
    return std::span<const float>(values).subspan(i * length, length);
  }
  // Indices of the members of each class, in dataset order.
  std::vector<std::vector<std::size_t>> class_members() const;
};

// Parses UCR-style text: one series per nonempty line, class token first,
// then values separated by tabs, commas or spaces.
Dataset parse_ucr(std::string_view content, std::string name = {});
Dataset load_ucr_file(const std::filesystem::path& path, std::string name = {});
std::string to_ucr_tsv(const Dataset& dataset);
void save_ucr_file(const Dataset& dataset, const std::filesystem::path& path);

struct DatasetSplits {
  Dataset train;
  Dataset test;
};

// Reads <root>/<name>/<name>_TRAIN.tsv and _TEST.tsv. The test split is
// labelled with the train split's class map.
DatasetSplits load_ucr_dataset(const std::filesystem::path& root, const std::string& name);

// Value of $ECR_DATA_ROOT, or an empty path.
std::filesystem::path data_root_from_env();

// Relabel `other` with the class map of `reference` (matching on numeric class value).
void align_labels(const Dataset& reference, Dataset& other);

// Rows `indices` of `dataset`, with labels re-densified over the classes present.
Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);
// First `length` timesteps of every series.
Dataset truncate(const Dataset& dataset, std::size_t length);

// [n x 1 x L] block of the selected series.
Tensor<float> gather_series(const Dataset& dataset, std::span<const std::size_t> indices);

struct BatchPlan {
  std::size_t classes_per_batch = 0;
  std::size_t samples_per_class = 0;
  std::size_t batches_per_epoch = 0;
  std::uint64_t seed = 0;

  std::size_t batch_size() const { return classes_per_batch * samples_per_class; }
};

// Clamps the class count to the dataset and inflates the per-class count so
// that the batch size stays close to the request.
BatchPlan make_batch_plan(const Dataset& dataset, std::size_t classes_requested,
                          std::size_t samples_requested, std::uint64_t seed);

struct Batch {
  std::vector<std::size_t> indices;
  std::vector<int> labels;
  Tensor<float> series;  // [B x 1 x L]
};

// Index sequences only; a pure function of (plan.seed, epoch).
std::vector<std::vector<std::size_t>> sample_batch_indices(const Dataset& dataset,
                                                           const BatchPlan& plan,
                                                           std::uint64_t epoch);
std::vector<Batch> sample_batches(const Dataset& dataset, const BatchPlan& plan,
                                  std::uint64_t epoch);

}  // namespace ecr
