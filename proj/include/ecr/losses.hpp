#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ecr/tensor.hpp"

namespace ecr {

template <typename T>
struct LossResult {
  T value{0};
  Tensor<T> grad;  // d(value)/d(input), same shape as the input
  std::size_t valid_anchors = 0;
  // Set when no anchor had both a positive and a negative; value is 0.
  bool degenerate = false;
  // Hinge activity and selected pair indices per anchor. Two inputs with the
  // same selection lie on the same smooth piece of the loss.
  std::vector<std::int64_t> selection;
};

// Mean negative log-softmax of the true class, logits [B x C].
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

// Per anchor: [mean positive distance - mean negative distance + margin]_+,
// averaged over anchors that have at least one positive and one negative.
// The anchor itself is never its own positive.
template <typename T>
LossResult<T> triplet_loss(const Tensor<T>& embeddings, std::span<const int> labels, double margin);

// Per anchor: [farthest positive - nearest negative + margin]_+, same reduction.
// Ties in the max/min pick the lowest index.
template <typename T>
LossResult<T> hard_triplet_loss(const Tensor<T>& embeddings, std::span<const int> labels,
                                double margin);

struct TripletConfig {
  double margin = 0.1;
};

enum class RetrievalLoss { BatchHard, Mean };

}  // namespace ecr
