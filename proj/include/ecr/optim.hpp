#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ecr/tensor.hpp"

namespace ecr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update of `params` in place. Moments start at zero
// (an empty state is sized on first use).
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr,
               const AdamConfig& config = {});

// Adam over a fixed list of parameter tensors, reading their gradient buffers.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<NamedTensor<T>> params, AdamConfig config = {});

  void step(double lr);
  void zero_grad();

  const std::vector<AdamState<T>>& states() const { return states_; }
  std::vector<AdamState<T>>& states() { return states_; }

 private:
  std::vector<NamedTensor<T>> params_;
  std::vector<AdamState<T>> states_;
  AdamConfig config_;
};

struct PlateauConfig {
  double factor = 0.5;
  int patience = 50;
  double min_lr = 1e-4;
  // Absolute improvement required to reset the stall counter.
  double threshold = 1e-4;
};

// Reduce-on-plateau for a minimized quantity. After `patience` consecutive
// calls without an improvement of at least `threshold`, the rate is
// multiplied by `factor` (floored at min_lr) and the counter restarts.
class PlateauScheduler {
 public:
  PlateauScheduler() = default;
  PlateauScheduler(double initial_lr, PlateauConfig config);

  double step(double observed_loss);
  double lr() const { return lr_; }
  int stalled() const { return stalled_; }
  double best() const { return best_; }

 private:
  PlateauConfig config_;
  double lr_ = 0.0;
  double best_ = 0.0;
  bool has_best_ = false;
  int stalled_ = 0;
};

}  // namespace ecr
