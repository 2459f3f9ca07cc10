#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ecr/backbone.hpp"
#include "ecr/checkpoint.hpp"
#include "ecr/data.hpp"
#include "ecr/losses.hpp"
#include "ecr/optim.hpp"

namespace ecr {

struct TrainConfig {
  int epochs = 1500;
  double lr_cls = 1e-3;
  double lr_ret = 1e-4;
  double margin = 0.1;
  std::size_t classes_per_batch = 4;
  std::size_t samples_per_class = 4;
  AdamConfig adam;
  double plateau_factor = 0.5;
  int plateau_patience = 50;
  double min_lr_cls = 1e-4;
  double min_lr_ret = 1e-5;
  RetrievalLoss retrieval_loss = RetrievalLoss::BatchHard;
  std::uint64_t seed = 0;
  BackboneConfig backbone;

  void validate() const;
};

// Parameters of one classification+retrieval model. The two backbones share
// a topology but never share buffers.
class EcrModel {
 public:
  EcrModel(const BackboneConfig& backbone, std::size_t num_classes, std::uint64_t seed);

  Backbone<float> cls;
  Linear<float> head;
  Backbone<float> ret;

  std::size_t num_classes() const { return head.out_features(); }
  std::size_t embedding_dim() const { return head.in_features(); }

  std::uint64_t seed = 0;
  std::size_t series_length = 0;
  std::vector<std::string> class_names;
  TrainConfig config;
  int best_epoch = -1;

  std::vector<NamedTensor<float>> cls_parameters();  // backbone + FC head
  std::vector<NamedTensor<float>> ret_parameters();
  // Every parameter and BN running statistic, prefixed "cls."/"head."/"ret.".
  std::vector<NamedTensor<float>> state();

  Checkpoint to_checkpoint();
  static EcrModel from_checkpoint(const Checkpoint& ckpt);
  void save(const std::filesystem::path& path);
  static EcrModel load(const std::filesystem::path& path);
};

struct EpochRecord {
  int epoch = 0;
  double cls_loss = 0.0;
  double ret_loss = 0.0;
  double lr_cls = 0.0;  // rates in effect during this epoch
  double lr_ret = 0.0;
};

struct TrainResult {
  EcrModel model;
  std::vector<EpochRecord> trace;
  double seconds = 0.0;
};

// Forward + backward of one branch on one batch in train mode, without an
// optimizer step. Returns the loss; gradients accumulate into the branch.
double cls_branch_backward(EcrModel& model, const Batch& batch);
double ret_branch_backward(EcrModel& model, const Batch& batch, RetrievalLoss loss, double margin);

// Trains both branches on a shared batch stream and returns the parameters
// from the epoch with the lowest total training loss.
TrainResult train_ecr(const Dataset& train, const TrainConfig& config,
                      const std::function<void(const EpochRecord&)>& on_epoch = {});

std::string loss_trace_csv(const std::vector<EpochRecord>& trace);

}  // namespace ecr
