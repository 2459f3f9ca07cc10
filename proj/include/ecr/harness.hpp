#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ecr/data.hpp"
#include "ecr/retrieval.hpp"
#include "ecr/stats.hpp"
#include "ecr/training.hpp"

namespace ecr {

enum class ModeKind { Ecr, EcrTime, ClsOnly, RetOnly, Softmax, TripletAblation, Euclidean };

// One evaluation mode. Names: ecr, ecrtime(n), cls-only, ret-only,
// softmax-ablation, triplet-ablation, ed-1nn.
struct ModeSpec {
  ModeKind kind = ModeKind::Ecr;
  int ensemble = 3;  // ecrtime only, 1..5

  std::string name() const;
  static ModeSpec parse(std::string_view text);
  friend bool operator==(const ModeSpec&, const ModeSpec&) = default;
};

struct ExperimentConfig {
  std::filesystem::path data_root;  // falls back to $ECR_DATA_ROOT
  std::vector<std::string> datasets;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<ModeSpec> modes{ModeSpec{}};
  TrainConfig train;
  std::filesystem::path output_dir = "ecr-results";
  EnsembleVoting voting = EnsembleVoting::Probability;
  double temperature = kDefaultTemperature;
  int jobs = 1;  // concurrent training runs; each run is single-threaded

  void validate() const;
  std::filesystem::path resolved_data_root() const;
};

// Applies one "key = value" setting; throws ConfigError for unknown keys.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
// Key-value text, one setting per line, '#' starts a comment.
ExperimentConfig parse_experiment_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base = {});

struct ResultRow {
  std::string dataset;
  std::uint64_t seed = 0;
  std::string mode;
  double accuracy = 0.0;
  double seconds = 0.0;  // training wall time of the models involved plus inference
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct EvalReport {
  std::vector<ResultRow> rows;

  // Mean accuracy over seeds, NaN when no cell exists.
  double mean_accuracy(const std::string& dataset, const std::string& mode) const;
  // datasets x modes grid of mean accuracies.
  AccuracyTable table() const;
};

// Trains what is missing, evaluates every dataset x seed x mode cell and
// appends one line per finished cell to <output_dir>/results.csv. Cells
// already present in that file are not recomputed; trained models are cached
// under <output_dir>/models.
EvalReport run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

std::string results_csv_header();
std::string result_row_csv(const ResultRow& row);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

// Wide table export: "dataset,<classifier>...".
std::string table_csv(const AccuracyTable& table);
// Accepts the wide layout above or a long layout with dataset_name,
// classifier_name and accuracy columns (duplicates are averaged).
AccuracyTable parse_accuracy_csv(std::string_view text);
AccuracyTable ingest_baseline_csv(const std::filesystem::path& path);

struct JoinResult {
  AccuracyTable table;
  std::vector<std::string> unmatched;  // names present on only one side
};

// Inner join on dataset name; columns of `external` are appended.
JoinResult join_tables(const AccuracyTable& local, const AccuracyTable& external);

std::string rank_csv(const AccuracyTable& table, const RankResult& ranks);
std::string pvalue_csv(const PairwiseTests& tests);

struct ScalabilityRow {
  std::string variant;  // "length" or "size"
  std::size_t length = 0;
  std::size_t size = 0;
  int epochs = 0;
  double seconds = 0.0;
};

// Short fixed-epoch training runs on truncated (lengths) and subsampled
// (sizes) copies of `train`, timing each.
std::vector<ScalabilityRow> scalability_probe(const Dataset& train,
                                              const std::vector<std::size_t>& lengths,
                                              const std::vector<std::size_t>& sizes,
                                              const TrainConfig& config);
std::string scalability_csv(const std::vector<ScalabilityRow>& rows);

// Class-stratified round-robin selection of `size` series, in dataset order.
std::vector<std::size_t> stratified_subset(const Dataset& dataset, std::size_t size);

}  // namespace ecr
