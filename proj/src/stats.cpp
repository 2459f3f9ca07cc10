#include "ecr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ecr/error.hpp"

namespace ecr {
namespace {

constexpr double kZeroDiff = 1e-12;

bool complete_row(const std::vector<double>& row) {
  return std::none_of(row.begin(), row.end(), [](double v) { return std::isnan(v); });
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": vectors of length " + std::to_string(a) + " and " +
                     std::to_string(b));
  }
}

}  // namespace

std::vector<double> AccuracyTable::column(std::size_t classifier) const {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& row : values) out.push_back(row.at(classifier));
  return out;
}

std::size_t AccuracyTable::classifier_index(const std::string& name) const {
  auto it = std::find(classifiers.begin(), classifiers.end(), name);
  if (it == classifiers.end()) throw ConfigError("no classifier column named '" + name + "'");
  return static_cast<std::size_t>(it - classifiers.begin());
}

std::vector<double> average_ranks(std::span<const double> accuracies) {
  const std::size_t n = accuracies.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return accuracies[i] > accuracies[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && accuracies[order[j + 1]] == accuracies[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

RankResult mean_rank(const AccuracyTable& table) {
  RankResult r;
  r.mean_ranks.assign(table.classifiers.size(), 0.0);
  for (std::size_t d = 0; d < table.values.size(); ++d) {
    const auto& row = table.values[d];
    require_same_length(row.size(), table.classifiers.size(), "mean_rank row");
    if (!complete_row(row)) {
      r.dropped_datasets.push_back(d < table.datasets.size() ? table.datasets[d] : std::to_string(d));
      continue;
    }
    const auto ranks = average_ranks(row);
    for (std::size_t c = 0; c < ranks.size(); ++c) r.mean_ranks[c] += ranks[c];
    ++r.datasets_ranked;
  }
  if (r.datasets_ranked > 0) {
    for (auto& m : r.mean_ranks) m /= static_cast<double>(r.datasets_ranked);
  }
  return r;
}

PairwiseSummary pairwise_summary(std::span<const double> a, std::span<const double> b, double band) {
  require_same_length(a.size(), b.size(), "pairwise_summary");
  PairwiseSummary s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (diff > 0) {
      ++s.wins;
    } else if (diff < 0) {
      ++s.losses;
    } else {
      ++s.ties;
    }
    s.outside_band.push_back(std::abs(diff) > band);
  }
  return s;
}

std::string scatter_csv(const std::vector<std::string>& datasets, std::span<const double> a,
                        std::span<const double> b, double band) {
  require_same_length(a.size(), b.size(), "scatter_csv");
  require_same_length(a.size(), datasets.size(), "scatter_csv datasets");
  const auto s = pairwise_summary(a, b, band);
  std::ostringstream os;
  os.precision(10);
  os << "dataset,acc_a,acc_b,diff,outside_band\n";
  for (std::size_t i = 0; i < a.size(); ++i) {
    os << datasets[i] << ',' << a[i] << ',' << b[i] << ',' << a[i] - b[i] << ','
       << (s.outside_band[i] ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string scatter_svg(std::span<const double> a, std::span<const double> b,
                        const std::string& label_a, const std::string& label_b, double band) {
  require_same_length(a.size(), b.size(), "scatter_svg");
  constexpr double size = 400.0, margin = 40.0, plot = size - 2 * margin;
  auto px = [&](double v) { return margin + std::clamp(v, 0.0, 1.0) * plot; };
  auto py = [&](double v) { return size - margin - std::clamp(v, 0.0, 1.0) * plot; };
  const auto s = pairwise_summary(a, b, band);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
     << "\">\n";
  os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot << "\" height=\""
     << plot << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
     << "\" stroke=\"black\"/>\n";
  for (double off : {band, -band}) {
    const double x0 = std::max(0.0, -off), x1 = std::min(1.0, 1.0 - off);
    os << "<line x1=\"" << px(x0) << "\" y1=\"" << py(x0 + off) << "\" x2=\"" << px(x1)
       << "\" y2=\"" << py(x1 + off) << "\" stroke=\"gray\" stroke-dasharray=\"3,3\"/>\n";
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    os << "<circle cx=\"" << px(b[i]) << "\" cy=\"" << py(a[i]) << "\" r=\"3\" fill=\""
       << (a[i] > b[i] ? "steelblue" : (a[i] < b[i] ? "firebrick" : "gray")) << "\"/>\n";
  }
  os << "<text x=\"" << size / 2 << "\" y=\"" << size - 8 << "\" text-anchor=\"middle\">" << label_b
     << "</text>\n";
  os << "<text x=\"12\" y=\"" << size / 2 << "\" transform=\"rotate(-90 12 " << size / 2
     << ")\" text-anchor=\"middle\">" << label_a << "</text>\n";
  os << "<text x=\"" << margin + 6 << "\" y=\"" << margin + 16 << "\">Wins: " << s.wins
     << "  Ties: " << s.ties << "  Losses: " << s.losses << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "wilcoxon_signed_rank");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (std::abs(d) > kZeroDiff) diffs.push_back(d);
  }
  WilcoxonResult r;
  r.n = diffs.size();
  if (r.n < 3) {
    r.degenerate = true;
    return r;
  }

  // Average ranks of |d|, with near-equal magnitudes treated as ties.
  const std::size_t n = r.n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(diffs[i]) < std::abs(diffs[j]); });
  std::vector<double> ranks(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) - std::abs(diffs[order[i]]) <= kZeroDiff) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i] > 0) r.w_plus += ranks[i];
  }

  const double nd = static_cast<double>(n);
  if (n <= kExactWilcoxonLimit) {
    // Distribution of 2*W+ over all 2^n sign assignments; doubled ranks are integers.
    std::vector<int> doubled(n);
    int total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    int reach = 0;
    for (int d : doubled) {
      for (int s = reach; s >= 0; --s) counts[static_cast<std::size_t>(s + d)] += counts[static_cast<std::size_t>(s)];
      reach += d;
    }
    const int observed = static_cast<int>(std::lround(2.0 * r.w_plus));
    double lower = 0.0, upper = 0.0;
    for (int s = 0; s <= total; ++s) {
      if (s <= observed) lower += counts[static_cast<std::size_t>(s)];
      if (s >= observed) upper += counts[static_cast<std::size_t>(s)];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    r.exact = true;
  } else {
    const double mean = nd * (nd + 1.0) / 4.0;
    const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    const double z = var > 0.0 ? (r.w_plus - mean) / std::sqrt(var) : 0.0;
    r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  }
  return r;
}

std::vector<double> holm_adjust(std::span<const double> p_values) {
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double v = std::min(1.0, static_cast<double>(m - k) * p_values[order[k]]);
    running = std::max(running, v);
    adjusted[order[k]] = running;
  }
  return adjusted;
}

PairwiseTests wilcoxon_holm(const AccuracyTable& table, double alpha) {
  const std::size_t k = table.classifiers.size();
  std::vector<std::vector<double>> cols(k);
  for (const auto& row : table.values) {
    require_same_length(row.size(), k, "wilcoxon_holm row");
    if (!complete_row(row)) continue;
    for (std::size_t c = 0; c < k; ++c) cols[c].push_back(row[c]);
  }
  PairwiseTests out;
  out.classifiers = table.classifiers;
  out.p_raw.assign(k, std::vector<double>(k, 1.0));
  out.p_adjusted.assign(k, std::vector<double>(k, 1.0));
  out.significant.assign(k, std::vector<bool>(k, false));
  out.degenerate.assign(k, std::vector<bool>(k, false));

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> raw;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const auto w = wilcoxon_signed_rank(cols[i], cols[j]);
      pairs.emplace_back(i, j);
      raw.push_back(w.p_value);
      out.p_raw[i][j] = out.p_raw[j][i] = w.p_value;
      out.degenerate[i][j] = out.degenerate[j][i] = w.degenerate;
    }
  }
  const auto adjusted = holm_adjust(raw);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    out.p_adjusted[i][j] = out.p_adjusted[j][i] = adjusted[p];
    out.significant[i][j] = out.significant[j][i] = adjusted[p] < alpha;
  }
  return out;
}

}  // namespace ecr
