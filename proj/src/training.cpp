#include "ecr/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace ecr {
namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    auto comma = s.find(',', pos);
    out.push_back(s.substr(pos, comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& tok : split(s)) out.push_back(std::stoull(tok));
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_finite(double loss, int epoch, const char* branch, int batch) {
  if (!std::isfinite(loss)) {
    throw DivergenceError(std::string("non-finite ") + branch + " loss at epoch " +
                              std::to_string(epoch) + ", batch " + std::to_string(batch),
                          epoch, branch, batch);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (!(lr_cls > 0.0 && lr_ret > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(min_lr_cls > 0.0 && min_lr_ret > 0.0)) throw ConfigError("minimum learning rates must be positive");
  if (!(margin >= 0.0)) throw ConfigError("margin must be nonnegative");
  if (plateau_patience < 1) throw ConfigError("plateau patience must be at least 1");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("plateau factor must be in (0, 1)");
  if (classes_per_batch < 2 || samples_per_class < 2) {
    throw ConfigError("batches need at least 2 classes with 2 samples each");
  }
  backbone.validate();
}

EcrModel::EcrModel(const BackboneConfig& backbone, std::size_t num_classes, std::uint64_t seed_)
    : cls(backbone), head(backbone.embedding_dim(), num_classes), ret(backbone), seed(seed_) {
  config.backbone = backbone;
  config.seed = seed_;
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    0x1417u};
  std::mt19937_64 rng(seq);
  cls.init(rng);
  head.init(rng);
  ret.init(rng);
}

std::vector<NamedTensor<float>> EcrModel::cls_parameters() {
  auto params = cls.parameters();
  head.collect("head", params);
  return params;
}

std::vector<NamedTensor<float>> EcrModel::ret_parameters() { return ret.parameters(); }

std::vector<NamedTensor<float>> EcrModel::state() {
  std::vector<NamedTensor<float>> out;
  auto add = [&out](const std::string& prefix, std::vector<NamedTensor<float>> items) {
    for (auto& t : items) out.push_back({prefix + t.name, t.tensor});
  };
  add("cls.", cls.parameters());
  add("cls.", cls.buffers());
  std::vector<NamedTensor<float>> h;
  head.collect("head", h);
  add("", h);
  add("ret.", ret.parameters());
  add("ret.", ret.buffers());
  return out;
}

Checkpoint EcrModel::to_checkpoint() {
  Checkpoint ckpt;
  ckpt.meta["format"] = "ecr-model";
  ckpt.meta["num_classes"] = std::to_string(num_classes());
  ckpt.meta["series_length"] = std::to_string(series_length);
  ckpt.meta["class_names"] = join(class_names);
  ckpt.meta["seed"] = std::to_string(seed);
  ckpt.meta["best_epoch"] = std::to_string(best_epoch);
  ckpt.meta["backbone.block_channels"] = join(config.backbone.block_channels);
  ckpt.meta["backbone.kernel_sizes"] = join(config.backbone.kernel_sizes);
  ckpt.meta["backbone.in_channels"] = std::to_string(config.backbone.in_channels);
  ckpt.meta["train.epochs"] = std::to_string(config.epochs);
  ckpt.meta["train.lr_cls"] = fmt_double(config.lr_cls);
  ckpt.meta["train.lr_ret"] = fmt_double(config.lr_ret);
  ckpt.meta["train.margin"] = fmt_double(config.margin);
  ckpt.meta["train.classes_per_batch"] = std::to_string(config.classes_per_batch);
  ckpt.meta["train.samples_per_class"] = std::to_string(config.samples_per_class);
  ckpt.meta["train.retrieval_loss"] =
      config.retrieval_loss == RetrievalLoss::BatchHard ? "hard-triplet" : "triplet";
  for (const auto& t : state()) ckpt.tensors.emplace_back(t.name, *t.tensor);
  return ckpt;
}

EcrModel EcrModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.get("format") != "ecr-model") throw FormatError("checkpoint is not an ECR model");
  BackboneConfig bb;
  bb.block_channels = split_sizes(ckpt.get("backbone.block_channels"));
  bb.kernel_sizes = split_sizes(ckpt.get("backbone.kernel_sizes"));
  bb.in_channels = std::stoull(ckpt.get("backbone.in_channels"));
  EcrModel model(bb, std::stoull(ckpt.get("num_classes")), std::stoull(ckpt.get("seed")));
  model.series_length = std::stoull(ckpt.get("series_length"));
  model.class_names = split(ckpt.get("class_names"));
  model.best_epoch = std::stoi(ckpt.get("best_epoch"));
  model.config.epochs = std::stoi(ckpt.get("train.epochs"));
  model.config.lr_cls = std::stod(ckpt.get("train.lr_cls"));
  model.config.lr_ret = std::stod(ckpt.get("train.lr_ret"));
  model.config.margin = std::stod(ckpt.get("train.margin"));
  model.config.classes_per_batch = std::stoull(ckpt.get("train.classes_per_batch"));
  model.config.samples_per_class = std::stoull(ckpt.get("train.samples_per_class"));
  model.config.retrieval_loss = ckpt.get("train.retrieval_loss") == "triplet"
                                    ? RetrievalLoss::Mean
                                    : RetrievalLoss::BatchHard;
  for (auto& t : model.state()) {
    const auto& src = ckpt.tensor(t.name);
    if (src.shape() != t.tensor->shape()) {
      throw FormatError("checkpoint tensor '" + t.name + "' has shape " + shape_str(src.shape()) +
                        ", model expects " + shape_str(t.tensor->shape()));
    }
    std::copy(src.data().begin(), src.data().end(), t.tensor->data().begin());
  }
  return model;
}

void EcrModel::save(const std::filesystem::path& path) { write_checkpoint(path, to_checkpoint()); }

EcrModel EcrModel::load(const std::filesystem::path& path) {
  return from_checkpoint(read_checkpoint(path));
}

double cls_branch_backward(EcrModel& model, const Batch& batch) {
  Tensor<float> features = model.cls.forward(batch.series, Mode::Train);
  Tensor<float> logits = model.head.forward(features);
  auto loss = cross_entropy(logits, batch.labels);
  if (std::isfinite(loss.value)) model.cls.backward(model.head.backward(loss.grad));
  return loss.value;
}

double ret_branch_backward(EcrModel& model, const Batch& batch, RetrievalLoss kind, double margin) {
  Tensor<float> features = model.ret.forward(batch.series, Mode::Train);
  L2Normalize<float> norm;
  Tensor<float> embeddings = norm.forward(features);
  auto loss = kind == RetrievalLoss::BatchHard ? hard_triplet_loss(embeddings, batch.labels, margin)
                                               : triplet_loss(embeddings, batch.labels, margin);
  if (std::isfinite(loss.value)) model.ret.backward(norm.backward(loss.grad));
  return loss.value;
}

TrainResult train_ecr(const Dataset& train, const TrainConfig& config,
                      const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const BatchPlan plan =
      make_batch_plan(train, config.classes_per_batch, config.samples_per_class, config.seed);

  TrainResult result{EcrModel(config.backbone, train.num_classes(), config.seed), {}, 0.0};
  EcrModel& model = result.model;
  model.config = config;
  model.series_length = train.length;
  model.class_names = train.class_names;

  Adam<float> cls_opt(model.cls_parameters(), config.adam);
  Adam<float> ret_opt(model.ret_parameters(), config.adam);
  PlateauScheduler cls_sched(config.lr_cls, {config.plateau_factor, config.plateau_patience,
                                             config.min_lr_cls, 1e-4});
  PlateauScheduler ret_sched(config.lr_ret, {config.plateau_factor, config.plateau_patience,
                                             config.min_lr_ret, 1e-4});

  double best_total = std::numeric_limits<double>::infinity();
  Checkpoint best;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr_cls = cls_sched.lr(), lr_ret = ret_sched.lr();
    const auto batches = sample_batches(train, plan, static_cast<std::uint64_t>(epoch));
    double cls_sum = 0.0, ret_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      cls_opt.zero_grad();
      const double cls_loss = cls_branch_backward(model, batches[b]);
      check_finite(cls_loss, epoch, "classification", static_cast<int>(b));
      cls_opt.step(lr_cls);

      ret_opt.zero_grad();
      const double ret_loss =
          ret_branch_backward(model, batches[b], config.retrieval_loss, config.margin);
      check_finite(ret_loss, epoch, "retrieval", static_cast<int>(b));
      ret_opt.step(lr_ret);

      cls_sum += cls_loss;
      ret_sum += ret_loss;
    }
    EpochRecord rec{epoch, cls_sum / static_cast<double>(batches.size()),
                    ret_sum / static_cast<double>(batches.size()), lr_cls, lr_ret};
    cls_sched.step(rec.cls_loss);
    ret_sched.step(rec.ret_loss);
    result.trace.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double total = rec.cls_loss + rec.ret_loss;
    if (total < best_total) {
      best_total = total;
      model.best_epoch = epoch;
      best = model.to_checkpoint();
    }
  }
  if (!best.tensors.empty()) result.model = EcrModel::from_checkpoint(best);
  result.model.config = config;
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string loss_trace_csv(const std::vector<EpochRecord>& trace) {
  std::ostringstream os;
  os << "epoch,cls_loss,ret_loss,lr_cls,lr_ret\n";
  for (const auto& r : trace) {
    os << r.epoch << ',' << fmt_double(r.cls_loss) << ',' << fmt_double(r.ret_loss) << ','
       << fmt_double(r.lr_cls) << ',' << fmt_double(r.lr_ret) << '\n';
  }
  return os.str();
}

}  // namespace ecr
