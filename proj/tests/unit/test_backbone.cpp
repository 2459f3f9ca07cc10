#include <doctest.h>

#include <cmath>
#include <random>

#include "ecr/backbone.hpp"
#include "ecr/error.hpp"
#include "oracles.hpp"

using namespace ecr;

namespace {

Tensor<float> gaussian_input(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto v = oracle::gaussian(shape_numel(shape), rng);
  return Tensor<float>(std::move(shape), std::vector<float>(v.begin(), v.end()));
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("first block layer table on a 1x1460 input") {
  Backbone<float> net;
  std::mt19937_64 rng(0);
  net.init(rng);
  std::vector<LayerTrace> trace;
  auto y = net.forward(Tensor<float>({1, 1, 1460}, 0.5f), Mode::Eval, &trace);
  CHECK(y.shape() == Shape{1, 128});

  // (kind, kernel/stride/pad, input shape) for the main path of block 0.
  struct Row {
    const char* kind;
    std::size_t k, s, p;
    Shape input;
  };
  const std::vector<Row> want{
      {"conv", 9, 1, 4, {1, 1460}},  {"bn+relu", 0, 0, 0, {64, 1460}}, {"conv", 7, 1, 3, {64, 1460}},
      {"bn+relu", 0, 0, 0, {64, 1460}}, {"conv", 5, 1, 2, {64, 1460}},  {"bn+relu", 0, 0, 0, {64, 1460}},
      {"conv", 3, 1, 1, {64, 1460}},  {"bn", 0, 0, 0, {64, 1460}},
  };
  std::vector<LayerTrace> block0;
  for (const auto& t : trace) {
    if (t.block == 0 && t.kind.rfind("shortcut", 0) != 0 && t.kind != "add+relu") block0.push_back(t);
  }
  REQUIRE(block0.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CAPTURE(i);
    CHECK(block0[i].kind == want[i].kind);
    CHECK(block0[i].input == want[i].input);
    CHECK(block0[i].output == Shape{64, 1460});
    if (block0[i].kind == std::string("conv")) {
      CHECK(block0[i].kernel == want[i].k);
      CHECK(block0[i].stride == want[i].s);
      CHECK(block0[i].pad == want[i].p);
    }
  }
}

TEST_CASE("block output shapes follow the channel plan") {
  Backbone<float> net;
  std::mt19937_64 rng(0);
  net.init(rng);
  std::vector<LayerTrace> trace;
  net.forward(Tensor<float>({1, 1, 40}, 1.0f), Mode::Eval, &trace);
  std::vector<Shape> block_out;
  for (const auto& t : trace)
    if (t.kind == "add+relu") block_out.push_back(t.output);
  CHECK(block_out == std::vector<Shape>{{64, 40}, {128, 40}, {128, 40}});
  CHECK(net.blocks[0].has_projection());
  CHECK(net.blocks[1].has_projection());
  CHECK_FALSE(net.blocks[2].has_projection());
}

TEST_CASE("zero-weight block with identity shortcut is relu") {
  ResidualBlock<double> block(3, 3, {9, 7, 5, 3});
  for (auto& c : block.convs) {
    c.weight.fill(0.0);
    c.bias.fill(0.0);
  }
  std::mt19937_64 rng(1);
  auto v = oracle::gaussian(2 * 3 * 12, rng);
  Tensor<double> x({2, 3, 12}, v);
  auto y = block.forward(x, Mode::Train);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == std::max(0.0, x[i]));
}

TEST_CASE("batch of 16 long series") {
  Backbone<float> net;
  std::mt19937_64 rng(2);
  net.init(rng);
  auto y = net.forward(gaussian_input({16, 1, 1460}, 3), Mode::Train);
  CHECK(y.shape() == Shape{16, 128});
  for (float v : y.data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("single series in eval mode, very short series") {
  Backbone<float> net;
  std::mt19937_64 rng(4);
  net.init(rng);
  CHECK(net.forward(gaussian_input({1, 1, 30}, 5), Mode::Eval).shape() == Shape{1, 128});
  CHECK(net.forward(gaussian_input({1, 1, 1}, 6), Mode::Eval).shape() == Shape{1, 128});
}

TEST_CASE("forward is deterministic") {
  Backbone<float> a, b;
  std::mt19937_64 r1(7), r2(7);
  a.init(r1);
  b.init(r2);
  auto x = gaussian_input({4, 1, 50}, 8);
  CHECK(a.forward(x, Mode::Train) == b.forward(x, Mode::Train));
  CHECK(a.forward(x, Mode::Eval) == b.forward(x, Mode::Eval));
}

TEST_CASE("parameter and buffer naming") {
  Backbone<float> net;
  auto params = net.parameters();
  CHECK(params.front().name == "input_bn.gamma");
  bool found = false;
  for (const auto& p : params) found |= p.name == "block0.conv0.weight";
  CHECK(found);
  auto buffers = net.buffers();
  CHECK(buffers.front().name == "input_bn.running_mean");
}

TEST_CASE("config validation and state errors") {
  BackboneConfig even;
  even.kernel_sizes = {9, 8};
  CHECK_THROWS_AS(even.validate(), ConfigError);
  BackboneConfig empty;
  empty.block_channels.clear();
  CHECK_THROWS_AS(Backbone<float>{empty}, ConfigError);
  Backbone<float> net;
  CHECK_THROWS_AS(net.backward(Tensor<float>({1, 128})), StateError);
  CHECK_THROWS_AS(net.forward(Tensor<float>({1, 2, 10}), Mode::Eval), ShapeError);
}

}  // TEST_SUITE
