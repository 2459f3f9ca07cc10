#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "ecr/checkpoint.hpp"
#include "ecr/error.hpp"
#include "ecr/training.hpp"

using namespace ecr;
namespace fs = std::filesystem;

namespace {

// Small and fast: narrow backbone, short series.
TrainConfig tiny_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.backbone.block_channels = {8, 8};
  c.backbone.kernel_sizes = {5, 3};
  return c;
}

Dataset toy_dataset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.3f);
  Dataset d;
  d.name = "toy";
  d.length = 24;
  d.class_names = {"1", "2", "3"};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 8; ++i) {
      d.labels.push_back(c);
      for (std::size_t t = 0; t < d.length; ++t)
        d.values.push_back(std::sin(0.3f * static_cast<float>(t) * static_cast<float>(c + 1)) + noise(rng));
    }
  return d;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("zero epochs returns the initial model with an empty trace") {
  auto r = train_ecr(toy_dataset(0), tiny_config(0));
  CHECK(r.trace.empty());
  EcrModel fresh(tiny_config(0).backbone, 3, 0);
  CHECK(encode_checkpoint(r.model.to_checkpoint()).size() > 0);
  CHECK(r.model.cls.parameters()[2].tensor->data()[0] == fresh.cls.parameters()[2].tensor->data()[0]);
}

TEST_CASE("trace has one finite entry per epoch and the loss falls") {
  auto r = train_ecr(toy_dataset(1), tiny_config(30));
  REQUIRE(r.trace.size() == 30);
  for (const auto& e : r.trace) {
    CHECK(std::isfinite(e.cls_loss));
    CHECK(std::isfinite(e.ret_loss));
  }
  CHECK(r.trace.back().cls_loss + r.trace.back().ret_loss < r.trace.front().cls_loss + r.trace.front().ret_loss);
  CHECK(r.model.best_epoch >= 0);
  CHECK(r.model.class_names == std::vector<std::string>{"1", "2", "3"});
  auto csv = loss_trace_csv(r.trace);
  CHECK(csv.rfind("epoch,cls_loss,ret_loss,lr_cls,lr_ret\n", 0) == 0);
}

TEST_CASE("same seed gives bit-identical checkpoints") {
  auto a = train_ecr(toy_dataset(2), tiny_config(5));
  auto b = train_ecr(toy_dataset(2), tiny_config(5));
  CHECK(encode_checkpoint(a.model.to_checkpoint()) == encode_checkpoint(b.model.to_checkpoint()));
  auto cfg = tiny_config(5);
  cfg.seed = 1;
  auto c = train_ecr(toy_dataset(2), cfg);
  CHECK(encode_checkpoint(a.model.to_checkpoint()) != encode_checkpoint(c.model.to_checkpoint()));
}

TEST_CASE("branches do not leak gradients into each other") {
  auto data = toy_dataset(3);
  EcrModel model(tiny_config(1).backbone, 3, 7);
  auto plan = make_batch_plan(data, 4, 4, 0);
  auto batch = sample_batches(data, plan, 0).front();
  for (auto& p : model.state()) {
    if (p.tensor->has_grad()) p.tensor->zero_grad();
  }

  cls_branch_backward(model, batch);
  double cls_mass = 0;
  for (auto& p : model.cls_parameters()) for (float g : p.tensor->grad()) cls_mass += std::abs(g);
  for (auto& p : model.ret_parameters()) for (float g : p.tensor->grad()) REQUIRE(g == 0.0f);
  CHECK(cls_mass > 0);

  for (auto& p : model.cls_parameters()) p.tensor->zero_grad();
  ret_branch_backward(model, batch, RetrievalLoss::BatchHard, 0.5);
  double ret_mass = 0;
  for (auto& p : model.ret_parameters()) for (float g : p.tensor->grad()) ret_mass += std::abs(g);
  for (auto& p : model.cls_parameters()) for (float g : p.tensor->grad()) REQUIRE(g == 0.0f);
  CHECK(ret_mass > 0);
}

TEST_CASE("the two backbones never share buffers") {
  EcrModel model(tiny_config(1).backbone, 2, 0);
  auto cls = model.cls.parameters();
  auto ret = model.ret.parameters();
  REQUIRE(cls.size() == ret.size());
  for (std::size_t i = 0; i < cls.size(); ++i) {
    CHECK(cls[i].tensor != ret[i].tensor);
    CHECK(cls[i].tensor->shape() == ret[i].tensor->shape());
  }
}

TEST_CASE("model save and load is lossless") {
  auto r = train_ecr(toy_dataset(4), tiny_config(3));
  const auto path = fs::temp_directory_path() / "ecr_model_roundtrip.ckpt";
  r.model.save(path);
  auto back = EcrModel::load(path);
  CHECK(encode_checkpoint(back.to_checkpoint()) == encode_checkpoint(r.model.to_checkpoint()));
  CHECK(back.class_names == r.model.class_names);
  CHECK(back.series_length == 24);
  fs::remove(path);
}

TEST_CASE("non-finite input aborts with a divergence error") {
  auto d = toy_dataset(5);
  for (std::size_t i = 0; i < d.size(); ++i) d.values[i * d.length + 3] = std::numeric_limits<float>::infinity();
  try {
    train_ecr(d, tiny_config(2));
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("epoch 0, batch 0") != std::string::npos);
  }
}

TEST_CASE("configuration errors") {
  auto d = toy_dataset(6);
  auto c = tiny_config(1);
  c.lr_cls = 0;
  CHECK_THROWS_AS(train_ecr(d, c), ConfigError);
  c = tiny_config(1);
  c.plateau_factor = 1.0;
  CHECK_THROWS_AS(train_ecr(d, c), ConfigError);
  c = tiny_config(-1);
  CHECK_THROWS_AS(train_ecr(d, c), ConfigError);
  Dataset one = d;
  one.class_names = {"1"};
  std::fill(one.labels.begin(), one.labels.end(), 0);
  CHECK_THROWS_AS(train_ecr(one, tiny_config(1)), UnsupportedDatasetError);
}

}  // TEST_SUITE
