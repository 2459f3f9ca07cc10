#include "ecr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "ecr/csv.hpp"

namespace ecr {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : value) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      if (auto t = trim(cur); !t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (auto t = trim(cur); !t.empty()) out.push_back(t);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("setting '" + key + "': '" + v + "' is not a number");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("setting '" + key + "': '" + v + "' is not an integer");
  }
}

// "0-4" or "0,1,7".
std::vector<std::uint64_t> parse_seeds(const std::string& value) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(value)) {
    const auto dash = item.find('-', 1);
    if (dash != std::string::npos) {
      const auto lo = to_int("seeds", trim(item.substr(0, dash)));
      const auto hi = to_int("seeds", trim(item.substr(dash + 1)));
      if (lo < 0 || hi < lo) throw ConfigError("bad seed range '" + item + "'");
      for (auto s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    } else {
      const auto s = to_int("seeds", item);
      if (s < 0) throw ConfigError("seeds must be nonnegative");
      seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }
  return seeds;
}

std::string config_tag(const TrainConfig& c) {
  std::ostringstream os;
  os << c.epochs << '|' << format_double(c.lr_cls) << '|' << format_double(c.lr_ret) << '|'
     << format_double(c.margin) << '|' << c.classes_per_batch << '|' << c.samples_per_class << '|'
     << format_double(c.plateau_factor) << '|' << c.plateau_patience << '|'
     << format_double(c.min_lr_cls) << '|' << format_double(c.min_lr_ret) << '|';
  for (auto v : c.backbone.block_channels) os << v << ',';
  os << '|';
  for (auto v : c.backbone.kernel_sizes) os << v << ',';
  const std::string s = os.str();
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "e%d-%08x", c.epochs, static_cast<unsigned>(h & 0xffffffffu));
  return buf;
}

struct ModelKey {
  std::string dataset;
  RetrievalLoss loss;
  std::uint64_t seed;
  auto operator<=>(const ModelKey&) const = default;
};

std::vector<ModelKey> models_for(const std::string& dataset, const ModeSpec& mode, std::uint64_t seed) {
  switch (mode.kind) {
    case ModeKind::Euclidean: return {};
    case ModeKind::TripletAblation: return {{dataset, RetrievalLoss::Mean, seed}};
    case ModeKind::EcrTime: {
      std::vector<ModelKey> keys;
      for (int j = 0; j < mode.ensemble; ++j) keys.push_back({dataset, RetrievalLoss::BatchHard, seed + j});
      return keys;
    }
    default: return {{dataset, RetrievalLoss::BatchHard, seed}};
  }
}

class ModelStore {
 public:
  ModelStore(std::filesystem::path root, const TrainConfig& config)
      : root_(std::move(root)), tag_(config_tag(config)) {}

  std::filesystem::path path(const ModelKey& k) const {
    const char* loss = k.loss == RetrievalLoss::BatchHard ? "hard" : "triplet";
    return root_ / k.dataset / (std::string(loss) + "-" + tag_) / ("seed" + std::to_string(k.seed) + ".ckpt");
  }
  bool exists(const ModelKey& k) const { return std::filesystem::exists(path(k)); }

  void save(const ModelKey& k, TrainResult& result) const {
    const auto p = path(k);
    write_file_atomic(with_suffix(p, ".trace.csv"), loss_trace_csv(result.trace));
    write_file_atomic(with_suffix(p, ".seconds"), format_double(result.seconds) + "\n");
    result.model.save(p);
  }
  EcrModel load(const ModelKey& k) const { return EcrModel::load(path(k)); }
  double seconds(const ModelKey& k) const {
    std::ifstream in(with_suffix(path(k), ".seconds"));
    double s = 0.0;
    in >> s;
    return s;
  }

 private:
  static std::filesystem::path with_suffix(std::filesystem::path p, const char* suffix) {
    p += suffix;
    return p;
  }
  std::filesystem::path root_;
  std::string tag_;
};

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> workers;
    for (int w = 0; w < std::min<int>(jobs, static_cast<int>(n)); ++w) {
      workers.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

std::string cell_key(const std::string& dataset, std::uint64_t seed, const std::string& mode) {
  return dataset + '\x1f' + std::to_string(seed) + '\x1f' + mode;
}

}  // namespace

// ---- modes and configuration -----------------------------------------------

std::string ModeSpec::name() const {
  switch (kind) {
    case ModeKind::Ecr: return "ecr";
    case ModeKind::EcrTime: return "ecrtime(" + std::to_string(ensemble) + ")";
    case ModeKind::ClsOnly: return "cls-only";
    case ModeKind::RetOnly: return "ret-only";
    case ModeKind::Softmax: return "softmax-ablation";
    case ModeKind::TripletAblation: return "triplet-ablation";
    case ModeKind::Euclidean: return "ed-1nn";
  }
  return "?";
}

ModeSpec ModeSpec::parse(std::string_view text) {
  const std::string s = trim(text);
  if (s == "ecr") return {ModeKind::Ecr};
  if (s == "cls-only") return {ModeKind::ClsOnly};
  if (s == "ret-only") return {ModeKind::RetOnly};
  if (s == "softmax-ablation" || s == "softmax") return {ModeKind::Softmax};
  if (s == "triplet-ablation") return {ModeKind::TripletAblation};
  if (s == "ed-1nn") return {ModeKind::Euclidean};
  if (s.rfind("ecrtime", 0) == 0) {
    std::string rest = s.substr(7);
    int n = 3;
    if (!rest.empty()) {
      if (rest.front() == '(' && rest.back() == ')') {
        rest = rest.substr(1, rest.size() - 2);
      } else if (rest.front() == ':') {
        rest = rest.substr(1);
      }
      n = static_cast<int>(to_int("mode", trim(rest)));
    }
    if (n < 1 || n > 5) throw ConfigError("ecrtime ensemble size must be in 1..5, got " + std::to_string(n));
    return {ModeKind::EcrTime, n};
  }
  throw ConfigError("unknown mode '" + s + "'");
}

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ConfigError("experiment needs at least one dataset");
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (modes.empty()) throw ConfigError("experiment needs at least one mode");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  train.validate();
}

std::filesystem::path ExperimentConfig::resolved_data_root() const {
  if (!data_root.empty()) return data_root;
  auto env = data_root_from_env();
  if (env.empty()) throw ConfigError("no dataset root: set data_root or ECR_DATA_ROOT");
  return env;
}

void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  TrainConfig& t = c.train;
  if (key == "data_root") {
    c.data_root = value;
  } else if (key == "datasets") {
    c.datasets = split_list(value);
  } else if (key == "seeds") {
    c.seeds = parse_seeds(value);
  } else if (key == "modes" || key == "mode") {
    c.modes.clear();
    for (const auto& m : split_list(value)) c.modes.push_back(ModeSpec::parse(m));
  } else if (key == "output_dir") {
    c.output_dir = value;
  } else if (key == "jobs") {
    c.jobs = static_cast<int>(to_int(key, value));
  } else if (key == "temperature") {
    c.temperature = to_double(key, value);
  } else if (key == "voting") {
    if (value == "probability") {
      c.voting = EnsembleVoting::Probability;
    } else if (value == "vote") {
      c.voting = EnsembleVoting::HardVote;
    } else {
      throw ConfigError("voting must be 'probability' or 'vote'");
    }
  } else if (key == "epochs") {
    t.epochs = static_cast<int>(to_int(key, value));
  } else if (key == "lr_cls") {
    t.lr_cls = to_double(key, value);
  } else if (key == "lr_ret") {
    t.lr_ret = to_double(key, value);
  } else if (key == "margin") {
    t.margin = to_double(key, value);
  } else if (key == "classes_per_batch") {
    t.classes_per_batch = static_cast<std::size_t>(to_int(key, value));
  } else if (key == "samples_per_class") {
    t.samples_per_class = static_cast<std::size_t>(to_int(key, value));
  } else if (key == "plateau_factor") {
    t.plateau_factor = to_double(key, value);
  } else if (key == "plateau_patience") {
    t.plateau_patience = static_cast<int>(to_int(key, value));
  } else if (key == "min_lr_cls") {
    t.min_lr_cls = to_double(key, value);
  } else if (key == "min_lr_ret") {
    t.min_lr_ret = to_double(key, value);
  } else if (key == "block_channels") {
    t.backbone.block_channels.clear();
    for (const auto& v : split_list(value)) t.backbone.block_channels.push_back(static_cast<std::size_t>(to_int(key, v)));
  } else if (key == "kernel_sizes") {
    t.backbone.kernel_sizes.clear();
    for (const auto& v : split_list(value)) t.backbone.kernel_sizes.push_back(static_cast<std::size_t>(to_int(key, v)));
  } else {
    throw ConfigError("unknown setting '" + key + "'");
  }
}

ExperimentConfig parse_experiment_config(std::string_view text, ExperimentConfig base) {
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base) {
  return parse_experiment_config(read_binary_file(path), std::move(base));
}

// ---- results -----------------------------------------------------------------

double EvalReport::mean_accuracy(const std::string& dataset, const std::string& mode) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.dataset == dataset && r.mode == mode) {
      sum += r.accuracy;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

AccuracyTable EvalReport::table() const {
  AccuracyTable t;
  for (const auto& r : rows) {
    if (std::find(t.datasets.begin(), t.datasets.end(), r.dataset) == t.datasets.end()) t.datasets.push_back(r.dataset);
    if (std::find(t.classifiers.begin(), t.classifiers.end(), r.mode) == t.classifiers.end()) t.classifiers.push_back(r.mode);
  }
  for (const auto& d : t.datasets) {
    std::vector<double> row;
    for (const auto& m : t.classifiers) row.push_back(mean_accuracy(d, m));
    t.values.push_back(std::move(row));
  }
  return t;
}

std::string results_csv_header() { return "dataset,seed,mode,accuracy,seconds,correct,total\n"; }

std::string result_row_csv(const ResultRow& r) {
  return csv_line({r.dataset, std::to_string(r.seed), r.mode, format_double(r.accuracy),
                   format_double(r.seconds), std::to_string(r.correct), std::to_string(r.total)});
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::vector<ResultRow> rows;
  if (!std::filesystem::exists(path)) return rows;
  auto records = parse_csv(read_binary_file(path));
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    if (f.size() != 7) throw FormatError(path.string() + ": row " + std::to_string(i + 1) + " has " + std::to_string(f.size()) + " fields");
    ResultRow r;
    r.dataset = f[0];
    r.seed = std::stoull(f[1]);
    r.mode = f[2];
    r.accuracy = std::stod(f[3]);
    r.seconds = std::stod(f[4]);
    r.correct = std::stoull(f[5]);
    r.total = std::stoull(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

EvalReport run_experiment(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  const auto root = config.resolved_data_root();
  std::filesystem::create_directories(config.output_dir);
  const auto results_path = config.output_dir / "results.csv";

  std::map<std::string, ResultRow> done;
  for (auto& r : read_results_csv(results_path)) done[cell_key(r.dataset, r.seed, r.mode)] = r;

  struct Cell {
    std::string dataset;
    std::uint64_t seed;
    ModeSpec mode;
  };
  std::vector<Cell> pending;
  std::set<ModelKey> needed;
  for (const auto& ds : config.datasets) {
    for (auto seed : config.seeds) {
      for (const auto& mode : config.modes) {
        if (done.count(cell_key(ds, seed, mode.name()))) continue;
        pending.push_back({ds, seed, mode});
        for (auto& k : models_for(ds, mode, seed)) needed.insert(k);
      }
    }
  }

  std::map<std::string, DatasetSplits> data;
  for (const auto& ds : config.datasets) {
    bool used = std::any_of(pending.begin(), pending.end(), [&](const Cell& c) { return c.dataset == ds; });
    if (used) data.emplace(ds, load_ucr_dataset(root, ds));
  }

  ModelStore store(config.output_dir / "models", config.train);
  std::vector<ModelKey> to_train;
  for (const auto& k : needed) {
    if (!store.exists(k)) to_train.push_back(k);
  }
  std::mutex log_mu;
  parallel_for(to_train.size(), config.jobs, [&](std::size_t i) {
    const auto& k = to_train[i];
    TrainConfig tc = config.train;
    tc.seed = k.seed;
    tc.retrieval_loss = k.loss;
    auto result = train_ecr(data.at(k.dataset).train, tc);
    store.save(k, result);
    if (log) {
      std::lock_guard lock(log_mu);
      *log << "trained " << k.dataset << " seed " << k.seed
           << (k.loss == RetrievalLoss::Mean ? " (triplet)" : "") << " in " << result.seconds << " s\n";
    }
  });

  std::ofstream results(results_path, std::ios::app);
  if (!results) throw FormatError("cannot append to " + results_path.string());
  if (std::filesystem::file_size(results_path) == 0) results << results_csv_header() << std::flush;

  for (const auto& cell : pending) {
    const auto& splits = data.at(cell.dataset);
    const auto t0 = std::chrono::steady_clock::now();
    double train_seconds = 0.0;
    std::vector<Prediction> preds;
    const auto keys = models_for(cell.dataset, cell.mode, cell.seed);
    std::vector<EcrModel> models;
    for (const auto& k : keys) {
      models.push_back(store.load(k));
      train_seconds += store.seconds(k);
    }
    switch (cell.mode.kind) {
      case ModeKind::Euclidean: preds = euclidean_1nn(splits.train, splits.test); break;
      case ModeKind::ClsOnly: preds = predict_dataset(models[0], splits.train, splits.test, InferenceMode::ClsOnly); break;
      case ModeKind::RetOnly: preds = predict_dataset(models[0], splits.train, splits.test, InferenceMode::RetOnly); break;
      case ModeKind::Softmax: preds = predict_dataset(models[0], splits.train, splits.test, InferenceMode::Softmax); break;
      case ModeKind::EcrTime: {
        std::vector<EcrModel*> ptrs;
        for (auto& m : models) ptrs.push_back(&m);
        preds = ecrtime_predict_dataset(ptrs, splits.train, splits.test, config.voting, config.temperature);
        break;
      }
      default: preds = predict_dataset(models[0], splits.train, splits.test, InferenceMode::Ecr); break;
    }
    const double infer_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto pred_path = config.output_dir / "predictions" / cell.dataset /
                           (cell.mode.name() + "_seed" + std::to_string(cell.seed) + ".csv");
    write_file_atomic(pred_path, predictions_csv(preds, splits.train.class_names));

    ResultRow row;
    row.dataset = cell.dataset;
    row.seed = cell.seed;
    row.mode = cell.mode.name();
    row.total = preds.size();
    row.correct = static_cast<std::size_t>(std::count_if(preds.begin(), preds.end(), [](const Prediction& p) {
      return p.predicted == p.true_label;
    }));
    row.accuracy = row.total ? static_cast<double>(row.correct) / static_cast<double>(row.total) : 0.0;
    row.seconds = train_seconds + infer_seconds;
    results << result_row_csv(row) << std::flush;
    if (log) *log << row.dataset << " seed " << row.seed << ' ' << row.mode << ": " << row.accuracy << '\n';
    done[cell_key(row.dataset, row.seed, row.mode)] = row;
  }

  EvalReport report;
  for (const auto& ds : config.datasets)
    for (auto seed : config.seeds)
      for (const auto& mode : config.modes) report.rows.push_back(done.at(cell_key(ds, seed, mode.name())));
  return report;
}

// ---- tables ------------------------------------------------------------------

std::string table_csv(const AccuracyTable& table) {
  CsvRow header{"dataset"};
  header.insert(header.end(), table.classifiers.begin(), table.classifiers.end());
  std::string out = csv_line(header);
  for (std::size_t d = 0; d < table.datasets.size(); ++d) {
    CsvRow row{table.datasets[d]};
    for (double v : table.values[d]) row.push_back(format_double(v));
    out += csv_line(row);
  }
  return out;
}

AccuracyTable parse_accuracy_csv(std::string_view text) {
  const auto records = parse_csv(text);
  if (records.empty()) throw FormatError("accuracy csv is empty");
  const auto& header = records.front();
  auto col = [&](const char* name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  auto number = [](const std::string& s, std::size_t row) {
    if (s.empty()) return std::nan("");
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw FormatError("accuracy csv row " + std::to_string(row + 1) + ": '" + s + "' is not a number");
    }
  };

  AccuracyTable t;
  const auto ds_col = col("dataset_name"), clf_col = col("classifier_name"), acc_col = col("accuracy");
  if (ds_col >= 0 && clf_col >= 0 && acc_col >= 0) {
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> sums;
    for (std::size_t i = 1; i < records.size(); ++i) {
      const auto& r = records[i];
      if (r.size() != header.size()) throw FormatError("accuracy csv row " + std::to_string(i + 1) + " has the wrong field count");
      const auto& ds = r[ds_col];
      const auto& clf = r[clf_col];
      if (std::find(t.datasets.begin(), t.datasets.end(), ds) == t.datasets.end()) t.datasets.push_back(ds);
      if (std::find(t.classifiers.begin(), t.classifiers.end(), clf) == t.classifiers.end()) t.classifiers.push_back(clf);
      auto& s = sums[{ds, clf}];
      s.first += number(r[acc_col], i);
      s.second += 1;
    }
    for (const auto& ds : t.datasets) {
      std::vector<double> row;
      for (const auto& clf : t.classifiers) {
        auto it = sums.find({ds, clf});
        row.push_back(it == sums.end() ? std::nan("") : it->second.first / it->second.second);
      }
      t.values.push_back(std::move(row));
    }
    return t;
  }

  if (header.size() < 2) throw FormatError("accuracy csv needs a dataset column and at least one classifier");
  t.classifiers.assign(header.begin() + 1, header.end());
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.size() != header.size()) throw FormatError("accuracy csv row " + std::to_string(i + 1) + " has the wrong field count");
    t.datasets.push_back(r[0]);
    std::vector<double> row;
    for (std::size_t c = 1; c < r.size(); ++c) row.push_back(number(r[c], i));
    t.values.push_back(std::move(row));
  }
  return t;
}

AccuracyTable ingest_baseline_csv(const std::filesystem::path& path) {
  return parse_accuracy_csv(read_binary_file(path));
}

JoinResult join_tables(const AccuracyTable& local, const AccuracyTable& external) {
  JoinResult j;
  j.table.classifiers = local.classifiers;
  j.table.classifiers.insert(j.table.classifiers.end(), external.classifiers.begin(), external.classifiers.end());
  for (std::size_t d = 0; d < local.datasets.size(); ++d) {
    auto it = std::find(external.datasets.begin(), external.datasets.end(), local.datasets[d]);
    if (it == external.datasets.end()) {
      j.unmatched.push_back(local.datasets[d]);
      continue;
    }
    auto row = local.values[d];
    const auto& ext = external.values[static_cast<std::size_t>(it - external.datasets.begin())];
    row.insert(row.end(), ext.begin(), ext.end());
    j.table.datasets.push_back(local.datasets[d]);
    j.table.values.push_back(std::move(row));
  }
  for (const auto& name : external.datasets) {
    if (std::find(local.datasets.begin(), local.datasets.end(), name) == local.datasets.end()) j.unmatched.push_back(name);
  }
  return j;
}

std::string rank_csv(const AccuracyTable& table, const RankResult& ranks) {
  std::string out = "classifier,mean_rank,datasets\n";
  for (std::size_t c = 0; c < table.classifiers.size(); ++c) {
    out += csv_line({table.classifiers[c], format_double(ranks.mean_ranks[c]), std::to_string(ranks.datasets_ranked)});
  }
  return out;
}

std::string pvalue_csv(const PairwiseTests& tests) {
  std::string out = "classifier_a,classifier_b,p_value,p_holm,significant,degenerate\n";
  const std::size_t k = tests.classifiers.size();
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      out += csv_line({tests.classifiers[i], tests.classifiers[j], format_double(tests.p_raw[i][j]),
                       format_double(tests.p_adjusted[i][j]), tests.significant[i][j] ? "1" : "0",
                       tests.degenerate[i][j] ? "1" : "0"});
    }
  }
  return out;
}

// ---- scalability -------------------------------------------------------------

std::vector<std::size_t> stratified_subset(const Dataset& dataset, std::size_t size) {
  if (size == 0) throw ConfigError("subset size must be positive");
  if (size > dataset.size()) {
    throw ConfigError("subset of " + std::to_string(size) + " series requested from " +
                      std::to_string(dataset.size()));
  }
  const auto members = dataset.class_members();
  std::vector<std::size_t> picked;
  for (std::size_t round = 0; picked.size() < size; ++round) {
    for (const auto& m : members) {
      if (round < m.size() && picked.size() < size) picked.push_back(m[round]);
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<ScalabilityRow> scalability_probe(const Dataset& train,
                                              const std::vector<std::size_t>& lengths,
                                              const std::vector<std::size_t>& sizes,
                                              const TrainConfig& config) {
  for (auto l : lengths) {
    if (l == 0 || l > train.length) {
      throw ConfigError("length variant " + std::to_string(l) + " outside 1.." + std::to_string(train.length));
    }
  }
  for (auto s : sizes) {
    if (s == 0 || s > train.size()) {
      throw ConfigError("size variant " + std::to_string(s) + " outside 1.." + std::to_string(train.size()));
    }
  }
  std::vector<ScalabilityRow> rows;
  auto time_run = [&](const Dataset& variant, const char* kind) {
    auto r = train_ecr(variant, config);
    rows.push_back({kind, variant.length, variant.size(), config.epochs, r.seconds});
  };
  for (auto l : lengths) time_run(truncate(train, l), "length");
  for (auto s : sizes) time_run(subset(train, stratified_subset(train, s)), "size");
  return rows;
}

std::string scalability_csv(const std::vector<ScalabilityRow>& rows) {
  std::string out = "variant,length,size,epochs,seconds\n";
  for (const auto& r : rows) {
    out += csv_line({r.variant, std::to_string(r.length), std::to_string(r.size), std::to_string(r.epochs),
                     format_double(r.seconds)});
  }
  return out;
}

}  // namespace ecr
