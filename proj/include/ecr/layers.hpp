#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "ecr/tensor.hpp"

namespace ecr {

enum class Mode { Train, Eval };

// ---- stateless kernels -----------------------------------------------------

// Cross-correlation of x [B x Cin x L] with w [Cout x Cin x K] plus bias [Cout].
// Output length is (L + 2*pad - K) / stride + 1.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                 std::size_t pad);

template <typename T>
struct Conv1dGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
Conv1dGrads<T> conv1d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out,
                               std::size_t stride, std::size_t pad);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Mean over the last axis: [B x C x L] -> [B x C].
template <typename T>
Tensor<T> gap(const Tensor<T>& x);

// x [B x d] times W [d x c] plus b [c].
template <typename T>
Tensor<T> fc(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Each row divided by max(||row||, 1e-12).
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x);

inline constexpr double kL2NormFloor = 1e-12;

// ---- layers with cached state for the backward pass ------------------------

template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  // Padding defaults to (kernel - 1) / 2, which preserves length at stride 1.
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride = 1);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

  // Kaiming-uniform over fan-in, zero bias.
  void init(std::mt19937_64& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& params);

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t kernel() const { return weight.dim(2); }

  Tensor<T> weight;
  Tensor<T> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

 private:
  Tensor<T> input_;
  bool ready_ = false;
};

template <typename T>
class BatchNorm1d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t channels);

  // Train mode normalizes with batch statistics over (B, L) and updates the
  // running estimates; eval mode uses the running estimates.
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);

  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& params);
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor<T>>& buffers);

  std::size_t channels() const { return gamma.size(); }

  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;

 private:
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  Mode mode_ = Mode::Train;
  bool ready_ = false;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  // Activation pattern of the last forward, used to detect kinks in gradient checks.
  const std::vector<bool>& mask() const { return mask_; }

 private:
  std::vector<bool> mask_;
  Shape shape_;
  bool ready_ = false;
};

template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  Shape shape_;
  bool ready_ = false;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

  void init(std::mt19937_64& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& params);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor<T> weight;  // [d x c]
  Tensor<T> bias;    // [c]

 private:
  Tensor<T> input_;
  bool ready_ = false;
};

template <typename T>
class L2Normalize {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  Tensor<T> output_;
  std::vector<T> norms_;
  bool ready_ = false;
};

}  // namespace ecr
