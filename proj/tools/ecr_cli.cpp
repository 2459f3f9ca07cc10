// ecr: train, evaluate and compare ECR / ECRTime time-series classifiers.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ecr/csv.hpp"
#include "ecr/error.hpp"
#include "ecr/harness.hpp"

namespace fs = std::filesystem;
using namespace ecr;

namespace {

struct Settings {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string data_root;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key = value settings file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "override one setting, key=value (repeatable)");
    cmd->add_option("--data-root", data_root, "UCR root directory (default: $ECR_DATA_ROOT)");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c;
    if (!config_file.empty()) c = load_experiment_config(config_file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!data_root.empty()) c.data_root = data_root;
    return c;
  }
};

// Either a named dataset under the data root or explicit split files.
struct DataSource {
  std::string dataset, train_file, test_file;

  void attach(CLI::App* cmd, bool need_test) {
    cmd->add_option("--dataset", dataset, "dataset name under the data root");
    cmd->add_option("--train-file", train_file, "training split file")->check(CLI::ExistingFile);
    if (need_test) cmd->add_option("--test-file", test_file, "test split file")->check(CLI::ExistingFile);
  }

  DatasetSplits load(const ExperimentConfig& c) const {
    if (!dataset.empty()) return load_ucr_dataset(c.resolved_data_root(), dataset);
    if (train_file.empty()) throw ConfigError("give --dataset or --train-file");
    DatasetSplits s;
    s.train = load_ucr_file(train_file);
    if (!test_file.empty()) {
      s.test = load_ucr_file(test_file);
      align_labels(s.train, s.test);
    }
    return s;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, text);
  std::cerr << "wrote " << path.string() << '\n';
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& f : parse_csv(text).empty() ? CsvRow{} : parse_csv(text).front()) {
    if (!f.empty()) out.push_back(static_cast<std::size_t>(std::stoull(f)));
  }
  return out;
}

AccuracyTable load_table(const fs::path& path) {
  const auto text = read_binary_file(path);
  const auto rows = parse_csv(text);
  if (!rows.empty() && rows.front().size() == 7 && rows.front()[1] == "seed" && rows.front()[2] == "mode") {
    return EvalReport{read_results_csv(path)}.table();
  }
  return parse_accuracy_csv(text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECR time-series classifier"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train one model and write a checkpoint");
  Settings train_settings;
  DataSource train_data;
  std::string model_out = "model.ckpt", trace_out, train_loss = "hard";
  std::uint64_t train_seed = 0;
  train_settings.attach(train_cmd);
  train_data.attach(train_cmd, false);
  train_cmd->add_option("--seed", train_seed, "training seed");
  train_cmd->add_option("--out", model_out, "checkpoint path");
  train_cmd->add_option("--trace", trace_out, "per-epoch loss CSV");
  train_cmd->add_option("--retrieval-loss", train_loss, "hard or triplet")->check(CLI::IsMember({"hard", "triplet"}));
  bool verbose = false;
  train_cmd->add_flag("-v,--verbose", verbose, "print every epoch");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "classify a test split with trained models");
  Settings predict_settings;
  DataSource predict_data;
  std::vector<std::string> model_paths;
  std::string predict_mode = "ecr", predict_out;
  predict_settings.attach(predict_cmd);
  predict_data.attach(predict_cmd, true);
  predict_cmd->add_option("--model", model_paths, "checkpoint; several give an ECRTime ensemble")
      ->required()
      ->check(CLI::ExistingFile);
  predict_cmd->add_option("--mode", predict_mode, "ecr, cls-only, ret-only or softmax-ablation");
  predict_cmd->add_option("--out", predict_out, "predictions CSV (default: stdout)");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "multi-seed, multi-mode evaluation with resume");
  Settings exp_settings;
  std::string exp_out;
  exp_settings.attach(exp_cmd);
  exp_cmd->add_option("--out", exp_out, "output directory (overrides output_dir)");

  // rank
  auto* rank_cmd = app.add_subcommand("rank", "mean ranks and Wilcoxon-Holm p-values");
  std::string rank_table, rank_baseline, rank_dir = ".";
  double alpha = 0.05;
  rank_cmd->add_option("--table", rank_table, "results.csv or a wide accuracy table")->required()->check(CLI::ExistingFile);
  rank_cmd->add_option("--baseline", rank_baseline, "external accuracy CSV to join")->check(CLI::ExistingFile);
  rank_cmd->add_option("--out-dir", rank_dir, "where ranks.csv and pvalues.csv go");
  rank_cmd->add_option("--alpha", alpha, "family-wise significance level");

  // compare
  auto* cmp_cmd = app.add_subcommand("compare", "pairwise wins/ties/losses and scatter plot");
  std::string cmp_table, cmp_baseline, cmp_a, cmp_b, cmp_dir = ".";
  double band = 0.05;
  cmp_cmd->add_option("--table", cmp_table, "results.csv or a wide accuracy table")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--baseline", cmp_baseline, "external accuracy CSV to join")->check(CLI::ExistingFile);
  cmp_cmd->add_option("-a", cmp_a, "first classifier column")->required();
  cmp_cmd->add_option("-b", cmp_b, "second classifier column")->required();
  cmp_cmd->add_option("--band", band, "half-width of the highlighted band");
  cmp_cmd->add_option("--out-dir", cmp_dir, "where scatter.csv and scatter.svg go");

  // scalability
  auto* scale_cmd = app.add_subcommand("scalability", "time short runs on truncated and subsampled data");
  Settings scale_settings;
  DataSource scale_data;
  std::string lengths_text, sizes_text, scale_out;
  int scale_epochs = 10;
  scale_settings.attach(scale_cmd);
  scale_data.attach(scale_cmd, false);
  scale_cmd->add_option("--lengths", lengths_text, "comma-separated series lengths");
  scale_cmd->add_option("--sizes", sizes_text, "comma-separated training-set sizes");
  scale_cmd->add_option("--epochs", scale_epochs, "epochs per timed run");
  scale_cmd->add_option("--out", scale_out, "runtime CSV (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      auto c = train_settings.resolve();
      auto splits = train_data.load(c);
      c.train.seed = train_seed;
      c.train.retrieval_loss = train_loss == "hard" ? RetrievalLoss::BatchHard : RetrievalLoss::Mean;
      auto result = train_ecr(splits.train, c.train, [&](const EpochRecord& r) {
        if (verbose || r.epoch == 0 || (r.epoch + 1) % 100 == 0) {
          std::cerr << "epoch " << r.epoch + 1 << " cls " << r.cls_loss << " ret " << r.ret_loss << '\n';
        }
      });
      result.model.save(model_out);
      std::cerr << "trained in " << result.seconds << " s, best epoch " << result.model.best_epoch + 1 << '\n';
      if (!trace_out.empty()) write_text(trace_out, loss_trace_csv(result.trace));
    } else if (*predict_cmd) {
      auto c = predict_settings.resolve();
      auto splits = predict_data.load(c);
      if (splits.test.size() == 0) throw ConfigError("predict needs a test split");
      std::vector<EcrModel> models;
      for (const auto& p : model_paths) models.push_back(EcrModel::load(p));
      std::vector<Prediction> preds;
      if (models.size() > 1) {
        std::vector<EcrModel*> ptrs;
        for (auto& m : models) ptrs.push_back(&m);
        preds = ecrtime_predict_dataset(ptrs, splits.train, splits.test, c.voting, c.temperature);
      } else {
        const auto mode = ModeSpec::parse(predict_mode);
        InferenceMode im = InferenceMode::Ecr;
        if (mode.kind == ModeKind::ClsOnly) im = InferenceMode::ClsOnly;
        else if (mode.kind == ModeKind::RetOnly) im = InferenceMode::RetOnly;
        else if (mode.kind == ModeKind::Softmax) im = InferenceMode::Softmax;
        else if (mode.kind != ModeKind::Ecr && mode.kind != ModeKind::EcrTime) {
          throw ConfigError("predict supports ecr, cls-only, ret-only and softmax-ablation");
        }
        preds = predict_dataset(models[0], splits.train, splits.test, im);
      }
      const auto csv = predictions_csv(preds, splits.train.class_names);
      if (predict_out.empty()) std::cout << csv;
      else write_text(predict_out, csv);
      std::cerr << "accuracy " << accuracy(preds) << '\n';
    } else if (*exp_cmd) {
      auto c = exp_settings.resolve();
      if (!exp_out.empty()) c.output_dir = exp_out;
      auto report = run_experiment(c, &std::cerr);
      const auto t = report.table();
      std::cout << table_csv(t);
      write_text(c.output_dir / "summary.csv", table_csv(t));
    } else if (*rank_cmd) {
      auto table = load_table(rank_table);
      if (!rank_baseline.empty()) {
        auto joined = join_tables(table, ingest_baseline_csv(rank_baseline));
        for (const auto& n : joined.unmatched) std::cerr << "warning: '" << n << "' not present in both tables\n";
        table = joined.table;
      }
      const auto ranks = mean_rank(table);
      for (const auto& d : ranks.dropped_datasets) std::cerr << "warning: '" << d << "' has missing cells, not ranked\n";
      write_text(fs::path(rank_dir) / "ranks.csv", rank_csv(table, ranks));
      write_text(fs::path(rank_dir) / "pvalues.csv", pvalue_csv(wilcoxon_holm(table, alpha)));
      std::cout << rank_csv(table, ranks);
    } else if (*cmp_cmd) {
      auto table = load_table(cmp_table);
      if (!cmp_baseline.empty()) {
        auto joined = join_tables(table, ingest_baseline_csv(cmp_baseline));
        for (const auto& n : joined.unmatched) std::cerr << "warning: '" << n << "' not present in both tables\n";
        table = joined.table;
      }
      const auto a = table.column(table.classifier_index(cmp_a));
      const auto b = table.column(table.classifier_index(cmp_b));
      const auto s = pairwise_summary(a, b, band);
      write_text(fs::path(cmp_dir) / "scatter.csv", scatter_csv(table.datasets, a, b, band));
      write_text(fs::path(cmp_dir) / "scatter.svg", scatter_svg(a, b, cmp_a, cmp_b, band));
      std::cout << cmp_a << " vs " << cmp_b << ": wins " << s.wins << ", ties " << s.ties << ", losses "
                << s.losses << '\n';
    } else if (*scale_cmd) {
      auto c = scale_settings.resolve();
      auto splits = scale_data.load(c);
      c.train.epochs = scale_epochs;
      const auto rows = scalability_probe(splits.train, parse_sizes(lengths_text), parse_sizes(sizes_text), c.train);
      const auto csv = scalability_csv(rows);
      if (scale_out.empty()) std::cout << csv;
      else write_text(scale_out, csv);
    }
  } catch (const ecr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
