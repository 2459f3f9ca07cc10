#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "constructed.hpp"
#include "ecr/error.hpp"
#include "ecr/retrieval.hpp"
#include "oracles.hpp"

using namespace ecr;
namespace fs = std::filesystem;

namespace {

FeatureLibrary library_of(std::vector<std::vector<float>> rows, std::vector<int> labels) {
  FeatureLibrary lib;
  lib.dim = rows.front().size();
  for (const auto& r : rows) lib.features.insert(lib.features.end(), r.begin(), r.end());
  lib.labels = std::move(labels);
  return lib;
}

std::vector<float> unit(std::size_t d, std::mt19937_64& rng) {
  auto g = oracle::gaussian(d, rng);
  double n = 0;
  for (double v : g) n += v * v;
  n = std::sqrt(n);
  std::vector<float> out;
  for (double v : g) out.push_back(static_cast<float>(v / n));
  return out;
}

TrainConfig tiny(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.backbone.block_channels = {8, 8};
  c.backbone.kernel_sizes = {5, 3};
  return c;
}

}  // namespace

TEST_SUITE("retrieval") {

TEST_CASE("distance examples") {
  auto lib = library_of({{1, 0}, {0, 1}}, {0, 1});
  std::vector<float> q{1, 0};
  auto d = distances(q, lib);
  CHECK(d[0] == 0.0f);
  CHECK(d[1] == doctest::Approx(1.41421).epsilon(1e-5));
  std::vector<float> wrong{1, 0, 0};
  CHECK_THROWS_AS(distances(wrong, lib), ShapeError);
}

TEST_CASE("Euclidean distance equals the cosine form on unit vectors") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    auto a = unit(16, rng), b = unit(16, rng);
    auto lib = library_of({b}, {0});
    double dot = 0;
    for (std::size_t k = 0; k < 16; ++k) dot += static_cast<double>(a[k]) * b[k];
    const double cosine_form = std::sqrt(std::max(0.0, 2.0 * (1.0 - dot)));
    REQUIRE(std::abs(distances(a, lib)[0] - cosine_form) < 1e-5);
  }
}

TEST_CASE("fusion") {
  std::vector<float> a{0, 2}, b{2, 0};
  CHECK(ecr_fuse(a, b) == DistanceSet{1, 1});
  CHECK(ecr_fuse(a, a) == DistanceSet(a.begin(), a.end()));
  std::vector<float> short_set{1};
  CHECK_THROWS_AS(ecr_fuse(a, short_set), ShapeError);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0, 2);
  for (int i = 0; i < 100; ++i) {
    std::vector<float> x(9), y(9);
    for (auto& v : x) v = u(rng);
    for (auto& v : y) v = u(rng);
    auto f = ecr_fuse(x, y);
    for (std::size_t k = 0; k < 9; ++k) CHECK(f[k] == doctest::Approx((x[k] + y[k]) / 2.0));
  }
}

TEST_CASE("1-NN examples and tie rule") {
  std::vector<float> d{0.5f, 0.1f, 0.9f};
  std::vector<int> labels{0, 1, 0};
  CHECK(predict_1nn(d, labels) == 1);
  std::vector<float> flat{0.3f, 0.3f, 0.3f};
  std::vector<int> mixed{2, 0, 1};
  CHECK(predict_1nn(flat, mixed) == 2);
  std::vector<float> none;
  std::vector<int> no_labels;
  CHECK_THROWS_AS(predict_1nn(none, no_labels), ShapeError);
}

TEST_CASE("1-NN is invariant under increasing transforms and self-fusion") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0, 2);
  std::uniform_int_distribution<int> lab(0, 3);
  for (int i = 0; i < 200; ++i) {
    std::vector<float> d(12);
    std::vector<int> y(12);
    for (auto& v : d) v = u(rng);
    for (auto& v : y) v = lab(rng);
    std::vector<float> squared;
    for (float v : d) squared.push_back(v * v + 3.0f);
    CHECK(predict_1nn(squared, y) == predict_1nn(d, y));
    CHECK(predict_1nn(ecr_fuse(d, d), y) == predict_1nn(d, y));
  }
}

TEST_CASE("argmax picks the first maximum") {
  std::vector<float> logits{0.1f, 2.0f};
  CHECK(argmax<float>(logits) == 1);
  std::vector<double> equal{1.0, 1.0, 1.0};
  CHECK(argmax<double>(equal) == 0);
}

TEST_CASE("class probabilities") {
  std::vector<float> d{0.0f, 2.0f};
  std::vector<int> y{0, 1};
  auto p = class_probabilities(d, y, 2);
  const double e = std::exp(-20.0);
  CHECK(p[0] == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(e / (1.0 + e)).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(2.06e-9).epsilon(0.01));

  std::vector<float> one_class{0.3f, 0.7f};
  std::vector<int> zeros{0, 0};
  auto single = class_probabilities(one_class, zeros, 1);
  CHECK(single[0] == 1.0);

  // A class with no library entry gets nothing.
  auto absent = class_probabilities(one_class, zeros, 3);
  CHECK(absent[0] == 1.0);
  CHECK(absent[1] == 0.0);
  CHECK(absent[2] == 0.0);

  CHECK_THROWS_AS(class_probabilities(d, y, 2, 0.0), ConfigError);
}

TEST_CASE("probabilities sum to one and agree with 1-NN on unique minima") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0, 2);
  std::uniform_int_distribution<int> lab(0, 4);
  for (int i = 0; i < 500; ++i) {
    std::vector<float> d(15);
    std::vector<int> y(15);
    for (auto& v : d) v = u(rng);
    for (auto& v : y) v = lab(rng);
    auto p = class_probabilities(d, y, 5);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    for (double v : p) CHECK(v >= 0.0);
    CHECK(static_cast<int>(argmax<double>(p)) == predict_1nn(d, y));
  }
}

TEST_CASE("ensemble arithmetic") {
  CHECK(ecrtime_predict({{0.2, 0.8}}) == 1);
  CHECK(ecrtime_predict({{1, 0}, {1, 0}, {0, 1}}) == 0);
  CHECK(ecrtime_predict({{0.6, 0.4}, {0.3, 0.7}}) == 1);
  CHECK(ecrtime_predict({{0.5, 0.5}}) == 0);
  CHECK(ecrtime_predict({{0.1, 0.3, 0.6}, {0.1, 0.3, 0.6}, {0.1, 0.3, 0.6}}) == 2);
  CHECK_THROWS_AS(ecrtime_predict({}), ShapeError);
  CHECK_THROWS_AS(ecrtime_predict({{0.5, 0.5}, {1.0}}), ShapeError);
  // Hard votes: two weak votes for class 1 beat one confident vote for class 0.
  CHECK(ecrtime_predict_votes({{0.99, 0.01}, {0.45, 0.55}, {0.45, 0.55}}) == 1);
  CHECK(ecrtime_predict({{0.99, 0.01}, {0.45, 0.55}, {0.45, 0.55}}) == 0);
}

TEST_CASE("libraries from a trained model") {
  auto data = constructed::two_mode();
  auto r = train_ecr(data.train, tiny(3));
  for (Branch b : {Branch::Cls, Branch::Ret}) {
    auto lib = build_library(r.model, b, data.train);
    CHECK(lib.size() == data.train.size());
    CHECK(lib.dim == 8);
    CHECK(lib.labels == data.train.labels);
    for (std::size_t i = 0; i < lib.size(); ++i) {
      double n = 0;
      for (float v : lib.row(i)) n += static_cast<double>(v) * v;
      REQUIRE(std::abs(std::sqrt(n) - 1.0) < 1e-5);
    }
    auto again = build_library(r.model, b, data.train);
    CHECK(again.features == lib.features);

    const auto path = fs::temp_directory_path() / "ecr_lib_roundtrip.bin";
    save_library(lib, path);
    auto back = load_library(path);
    CHECK(back.features == lib.features);
    CHECK(back.labels == lib.labels);
    CHECK(back.branch == b);
    fs::remove(path);
  }
}

TEST_CASE("training series queried against their own library") {
  auto data = constructed::two_mode();
  auto r = train_ecr(data.train, tiny(3));
  auto cls = build_library(r.model, Branch::Cls, data.train);
  auto ret = build_library(r.model, Branch::Ret, data.train);
  for (std::size_t i = 0; i < data.train.size(); i += 7) {
    auto fused = ecr_fuse(distances(cls.row(i), cls), distances(ret.row(i), ret));
    CHECK(fused[i] < 1e-3f);
    for (float v : fused) CHECK(v <= 2.0f + 1e-6f);
  }
  auto preds = predict_dataset(r.model, data.train, data.train, InferenceMode::Ecr);
  for (const auto& p : preds) {
    CHECK(p.predicted == p.true_label);
    CHECK(p.nearest_distance < 1e-3);
  }
}

TEST_CASE("single-member ensemble equals the ECR") {
  auto data = constructed::two_mode(7);
  auto r = train_ecr(data.train, tiny(2));
  std::vector<EcrModel*> one{&r.model};
  auto ens = ecrtime_predict_dataset(one, data.train, data.queries);
  auto ecr = predict_dataset(r.model, data.train, data.queries, InferenceMode::Ecr);
  for (std::size_t i = 0; i < ens.size(); ++i) CHECK(ens[i].predicted == ecr[i].predicted);
  std::vector<EcrModel*> three{&r.model, &r.model, &r.model};
  auto dup = ecrtime_predict_dataset(three, data.train, data.train);
  auto base = predict_dataset(r.model, data.train, data.train, InferenceMode::Ecr);
  for (std::size_t i = 0; i < dup.size(); ++i) CHECK(dup[i].predicted == base[i].predicted);
}

TEST_CASE("1-NN and softmax head diverge on a two-mode class") {
  auto data = constructed::two_mode();
  auto r = train_ecr(data.train, constructed::two_mode_training());
  auto nn = predict_dataset(r.model, data.train, data.queries, InferenceMode::Ecr);
  auto head = predict_dataset(r.model, data.train, data.queries, InferenceMode::Softmax);
  for (std::size_t i = 0; i < nn.size(); ++i) {
    CHECK(nn[i].predicted == 1);
    CHECK(head[i].predicted == 0);
    CHECK(predict_softmax_head(r.model, data.queries.series(i)) == head[i].predicted);
  }
}

TEST_CASE("predictions csv uses original class tokens") {
  std::vector<Prediction> p{{0, 0, 1, 0.25}, {1, 1, 1, std::nan("")}};
  auto csv = predictions_csv(p, {"-1", "1"});
  CHECK(csv == "index,true_label,predicted_label,nearest_distance\n0,-1,1,0.25\n1,1,1,\n");
}

TEST_CASE("raw-series Euclidean 1-NN") {
  auto train = parse_ucr("1 0 0\n2 5 5\n");
  auto test = parse_ucr("1 1 1\n2 4 4\n2 0.1 0\n");
  align_labels(train, test);
  auto p = euclidean_1nn(train, test);
  CHECK(p[0].predicted == 0);
  CHECK(p[1].predicted == 1);
  CHECK(p[2].predicted == 0);
  CHECK(accuracy(p) == doctest::Approx(2.0 / 3.0));
  CHECK(p[0].nearest_distance == doctest::Approx(std::sqrt(2.0)));
}

}  // TEST_SUITE
