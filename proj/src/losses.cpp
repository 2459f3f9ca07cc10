#include "ecr/losses.hpp"

#include <cmath>
#include <limits>

namespace ecr {
namespace {

template <typename T>
void check_embeddings(const Tensor<T>& g, std::span<const int> labels, double margin) {
  require_shape(g, 2, "triplet loss embeddings");
  if (labels.size() != g.dim(0)) {
    throw ShapeError("triplet loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(g.dim(0)) + " embeddings");
  }
  if (!(margin >= 0.0)) throw ConfigError("triplet margin must be nonnegative");
}

// Full B x B Euclidean distance table.
template <typename T>
std::vector<T> pairwise_distances(const Tensor<T>& g) {
  const std::size_t n = g.dim(0), d = g.dim(1);
  std::vector<T> dist(n * n, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      T sq{0};
      for (std::size_t k = 0; k < d; ++k) {
        const T diff = g[i * d + k] - g[j * d + k];
        sq += diff * diff;
      }
      dist[i * n + j] = dist[j * n + i] = std::sqrt(sq);
    }
  }
  return dist;
}

// Adds weight * d||g_a - g_b|| / d(g_a, g_b) into grad. Zero distance has a zero subgradient.
template <typename T>
void add_distance_grad(const Tensor<T>& g, std::size_t a, std::size_t b, T dist, T weight,
                       Tensor<T>& grad) {
  if (dist <= T{0}) return;
  const std::size_t d = g.dim(1);
  for (std::size_t k = 0; k < d; ++k) {
    const T u = weight * (g[a * d + k] - g[b * d + k]) / dist;
    grad[a * d + k] += u;
    grad[b * d + k] -= u;
  }
}

// Comparisons against NaN are false, so without this a poisoned batch would
// look like one with no active hinge and report a loss of zero.
template <typename T>
bool all_finite(const Tensor<T>& g) {
  for (T v : g.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_shape(logits, 2, "cross_entropy logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (classes < 2) throw ShapeError("cross_entropy: at least two classes are required");
  if (labels.size() != batch) throw ShapeError("cross_entropy: label count does not match batch");

  LossResult<T> r;
  r.grad = Tensor<T>(logits.shape());
  r.valid_anchors = batch;
  r.degenerate = batch == 0;
  if (batch == 0) return r;
  double total = 0.0;
  const T inv_b = T{1} / static_cast<T>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(y) + " out of range [0, " +
                      std::to_string(classes) + ")");
    }
    const T* z = logits.ptr() + i * classes;
    T zmax = z[0];
    for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, z[c]);
    T sum{0};
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    const T log_sum = std::log(sum) + zmax;
    total += static_cast<double>(log_sum - z[y]);
    T* dz = r.grad.ptr() + i * classes;
    for (std::size_t c = 0; c < classes; ++c) dz[c] = std::exp(z[c] - log_sum) * inv_b;
    dz[y] -= inv_b;
  }
  r.value = static_cast<T>(total / static_cast<double>(batch));
  return r;
}

template <typename T>
LossResult<T> triplet_loss(const Tensor<T>& embeddings, std::span<const int> labels, double margin) {
  check_embeddings(embeddings, labels, margin);
  const std::size_t n = embeddings.dim(0);
  const auto dist = pairwise_distances(embeddings);
  LossResult<T> r;
  r.grad = Tensor<T>(embeddings.shape());
  if (!all_finite(embeddings)) {
    r.value = std::numeric_limits<T>::quiet_NaN();
    return r;
  }

  struct Term {
    std::size_t anchor, positives, negatives;
  };
  std::vector<Term> active;
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    double pos_sum = 0.0, neg_sum = 0.0;
    std::size_t np = 0, nn = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        pos_sum += dist[a * n + j];
        ++np;
      } else {
        neg_sum += dist[a * n + j];
        ++nn;
      }
    }
    if (np == 0 || nn == 0) {
      r.selection.push_back(-1);
      continue;
    }
    ++r.valid_anchors;
    const double term = pos_sum / np - neg_sum / nn + margin;
    r.selection.push_back(term > 0.0 ? 1 : 0);
    if (term > 0.0) {
      total += term;
      active.push_back({a, np, nn});
    }
  }
  if (r.valid_anchors == 0) {
    r.degenerate = true;
    return r;
  }
  const T scale = T{1} / static_cast<T>(r.valid_anchors);
  for (const auto& t : active) {
    const T wp = scale / static_cast<T>(t.positives);
    const T wn = -scale / static_cast<T>(t.negatives);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == t.anchor) continue;
      const bool pos = labels[j] == labels[t.anchor];
      add_distance_grad(embeddings, t.anchor, j, dist[t.anchor * n + j], pos ? wp : wn, r.grad);
    }
  }
  r.value = static_cast<T>(total / static_cast<double>(r.valid_anchors));
  return r;
}

template <typename T>
LossResult<T> hard_triplet_loss(const Tensor<T>& embeddings, std::span<const int> labels,
                                double margin) {
  check_embeddings(embeddings, labels, margin);
  const std::size_t n = embeddings.dim(0);
  const auto dist = pairwise_distances(embeddings);
  LossResult<T> r;
  r.grad = Tensor<T>(embeddings.shape());
  if (!all_finite(embeddings)) {
    r.value = std::numeric_limits<T>::quiet_NaN();
    return r;
  }

  struct Term {
    std::size_t anchor, positive, negative;
  };
  std::vector<Term> active;
  double total = 0.0;
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t hp = none, hn = none;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const T dj = dist[a * n + j];
      if (labels[j] == labels[a]) {
        if (hp == none || dj > dist[a * n + hp]) hp = j;
      } else {
        if (hn == none || dj < dist[a * n + hn]) hn = j;
      }
    }
    if (hp == none || hn == none) {
      r.selection.insert(r.selection.end(), {-1, -1, -1});
      continue;
    }
    ++r.valid_anchors;
    const double term =
        static_cast<double>(dist[a * n + hp]) - static_cast<double>(dist[a * n + hn]) + margin;
    r.selection.insert(r.selection.end(), {term > 0.0 ? 1 : 0, static_cast<std::int64_t>(hp),
                                           static_cast<std::int64_t>(hn)});
    if (term > 0.0) {
      total += term;
      active.push_back({a, hp, hn});
    }
  }
  if (r.valid_anchors == 0) {
    r.degenerate = true;
    return r;
  }
  const T scale = T{1} / static_cast<T>(r.valid_anchors);
  for (const auto& t : active) {
    add_distance_grad(embeddings, t.anchor, t.positive, dist[t.anchor * n + t.positive], scale, r.grad);
    add_distance_grad(embeddings, t.anchor, t.negative, dist[t.anchor * n + t.negative], -scale, r.grad);
  }
  r.value = static_cast<T>(total / static_cast<double>(r.valid_anchors));
  return r;
}

template LossResult<float> cross_entropy(const Tensor<float>&, std::span<const int>);
template LossResult<double> cross_entropy(const Tensor<double>&, std::span<const int>);
template LossResult<float> triplet_loss(const Tensor<float>&, std::span<const int>, double);
template LossResult<double> triplet_loss(const Tensor<double>&, std::span<const int>, double);
template LossResult<float> hard_triplet_loss(const Tensor<float>&, std::span<const int>, double);
template LossResult<double> hard_triplet_loss(const Tensor<double>&, std::span<const int>, double);

}  // namespace ecr
