#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ecr/layers.hpp"

namespace ecr {

struct BackboneConfig {
  std::vector<std::size_t> block_channels{64, 128, 128};
  std::vector<std::size_t> kernel_sizes{9, 7, 5, 3};
  std::size_t in_channels = 1;

  std::size_t embedding_dim() const { return block_channels.back(); }
  // Throws ConfigError on even kernels or empty lists.
  void validate() const;
};

// One recorded layer application. `input` excludes the batch axis.
struct LayerTrace {
  int block = -1;  // -1 for the input BN
  std::string kind;  // "conv", "bn", "bn+relu", "shortcut-conv", "shortcut-bn", "add+relu"
  std::size_t kernel = 0;
  std::size_t stride = 0;
  std::size_t pad = 0;
  Shape input;
  Shape output;
};

// Four conv+BN stages with kernels `kernel_sizes`. The last stage's ReLU is
// applied once, after the shortcut is added. The shortcut is the identity
// when channel counts match, else a 1x1 conv followed by BN.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(std::size_t in_channels, std::size_t out_channels,
                const std::vector<std::size_t>& kernel_sizes);

  Tensor<T> forward(const Tensor<T>& x, Mode mode, int block_index = 0,
                    std::vector<LayerTrace>* trace = nullptr);
  Tensor<T> backward(const Tensor<T>& grad_out);

  void init(std::mt19937_64& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& params);
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor<T>>& buffers);
  // ReLU activation patterns of the last forward, concatenated.
  void append_masks(std::vector<bool>& out) const;

  bool has_projection() const { return projection_; }

  std::vector<Conv1d<T>> convs;
  std::vector<BatchNorm1d<T>> norms;
  Conv1d<T> shortcut_conv;
  BatchNorm1d<T> shortcut_norm;

 private:
  std::vector<Relu<T>> relus_;
  Relu<T> out_relu_;
  bool projection_ = false;
};

// Input BN, the residual blocks, then global average pooling to [B x d].
template <typename T>
class Backbone {
 public:
  explicit Backbone(BackboneConfig config = {});

  Tensor<T> forward(const Tensor<T>& x, Mode mode, std::vector<LayerTrace>* trace = nullptr);
  // Accumulates parameter gradients and returns the input gradient.
  Tensor<T> backward(const Tensor<T>& grad_out);

  void init(std::mt19937_64& rng);
  std::vector<NamedTensor<T>> parameters();
  std::vector<NamedTensor<T>> buffers();
  void zero_grad();
  std::vector<bool> relu_masks() const;

  const BackboneConfig& config() const { return config_; }

  BatchNorm1d<T> input_norm;
  std::vector<ResidualBlock<T>> blocks;

 private:
  BackboneConfig config_;
  GlobalAvgPool<T> pool_;
  bool ready_ = false;
};

}  // namespace ecr
