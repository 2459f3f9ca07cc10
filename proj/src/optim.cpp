#include "ecr/optim.hpp"

#include <algorithm>
#include <cmath>

namespace ecr {

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr,
               const AdamConfig& config) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), T{0});
    state.v.assign(params.size(), T{0});
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam: optimizer state does not match parameter buffer");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T step_size = static_cast<T>(lr / bias1);
  const T inv_sqrt_bias2 = static_cast<T>(1.0 / std::sqrt(bias2));
  const T eps = static_cast<T>(config.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    state.m[i] = b1 * state.m[i] + (T{1} - b1) * g;
    state.v[i] = b2 * state.v[i] + (T{1} - b2) * g * g;
    const T denom = std::sqrt(state.v[i]) * inv_sqrt_bias2 + eps;
    params[i] -= step_size * state.m[i] / denom;
  }
}

template <typename T>
Adam<T>::Adam(std::vector<NamedTensor<T>> params, AdamConfig config)
    : params_(std::move(params)), states_(params_.size()), config_(config) {
  for (auto& p : params_) p.tensor->ensure_grad();
}

template <typename T>
void Adam<T>::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& t = *params_[i].tensor;
    adam_step<T>(t.data(), t.grad(), states_[i], lr, config_);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor->zero_grad();
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, double,
                               const AdamConfig&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&,
                                double, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

PlateauScheduler::PlateauScheduler(double initial_lr, PlateauConfig config)
    : config_(config), lr_(initial_lr) {
  if (!(initial_lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(config.factor > 0.0 && config.factor < 1.0)) throw ConfigError("plateau factor must be in (0, 1)");
  if (config.patience < 1) throw ConfigError("plateau patience must be at least 1");
}

double PlateauScheduler::step(double observed_loss) {
  if (!has_best_ || observed_loss < best_ - config_.threshold) {
    best_ = observed_loss;
    has_best_ = true;
    stalled_ = 0;
    return lr_;
  }
  if (++stalled_ >= config_.patience) {
    lr_ = std::max(lr_ * config_.factor, config_.min_lr);
    stalled_ = 0;
  }
  return lr_;
}

}  // namespace ecr
