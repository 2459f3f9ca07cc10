#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ecr {

// Datasets x classifiers accuracy grid. Missing cells hold NaN.
struct AccuracyTable {
  std::vector<std::string> datasets;
  std::vector<std::string> classifiers;
  std::vector<std::vector<double>> values;  // [dataset][classifier]

  std::vector<double> column(std::size_t classifier) const;
  std::size_t classifier_index(const std::string& name) const;  // throws if absent
};

// Rank 1 = highest accuracy; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> accuracies);

struct RankResult {
  std::vector<double> mean_ranks;  // per classifier
  std::vector<std::string> dropped_datasets;  // rows with a missing cell
  std::size_t datasets_ranked = 0;
};

RankResult mean_rank(const AccuracyTable& table);

struct PairwiseSummary {
  std::size_t wins = 0;  // a > b
  std::size_t ties = 0;
  std::size_t losses = 0;
  std::vector<bool> outside_band;  // |a - b| > band
};

PairwiseSummary pairwise_summary(std::span<const double> a, std::span<const double> b,
                                 double band = 0.05);

// "dataset,acc_a,acc_b,diff,outside_band"
std::string scatter_csv(const std::vector<std::string>& datasets, std::span<const double> a,
                        std::span<const double> b, double band = 0.05);
// Square scatter plot of a (y) against b (x) with the diagonal and +-band lines.
std::string scatter_svg(std::span<const double> a, std::span<const double> b,
                        const std::string& label_a, const std::string& label_b, double band = 0.05);

struct WilcoxonResult {
  double p_value = 1.0;  // two-sided
  double w_plus = 0.0;   // rank sum of positive differences a - b
  std::size_t n = 0;     // nonzero differences
  bool exact = false;
  bool degenerate = false;  // fewer than 3 nonzero differences; p reported as 1
};

// Two-sided signed-rank test of a - b. Zero differences are dropped; ties
// share average ranks. Exact enumeration for n <= 25, otherwise the normal
// approximation with tie-corrected variance.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

inline constexpr std::size_t kExactWilcoxonLimit = 25;

// Holm step-down adjustment; output is in input order.
std::vector<double> holm_adjust(std::span<const double> p_values);

struct PairwiseTests {
  std::vector<std::string> classifiers;
  std::vector<std::vector<double>> p_raw;       // symmetric, diagonal 1
  std::vector<std::vector<double>> p_adjusted;  // Holm over all unordered pairs
  std::vector<std::vector<bool>> significant;
  std::vector<std::vector<bool>> degenerate;
};

// Rows with a missing cell are excluded before testing.
PairwiseTests wilcoxon_holm(const AccuracyTable& table, double alpha = 0.05);

}  // namespace ecr
