#include "ecr/backbone.hpp"

namespace ecr {

void BackboneConfig::validate() const {
  if (block_channels.empty()) throw ConfigError("backbone needs at least one residual block");
  if (kernel_sizes.empty()) throw ConfigError("residual block needs at least one stage");
  for (std::size_t k : kernel_sizes) {
    if (k == 0 || k % 2 == 0) throw ConfigError("kernel sizes must be odd, got " + std::to_string(k));
  }
  for (std::size_t c : block_channels) {
    if (c == 0) throw ConfigError("block channel counts must be positive");
  }
  if (in_channels == 0) throw ConfigError("input channel count must be positive");
}

// ---- ResidualBlock ---------------------------------------------------------

template <typename T>
ResidualBlock<T>::ResidualBlock(std::size_t in_channels, std::size_t out_channels,
                                const std::vector<std::size_t>& kernel_sizes)
    : projection_(in_channels != out_channels) {
  std::size_t ch = in_channels;
  for (std::size_t k : kernel_sizes) {
    convs.emplace_back(ch, out_channels, k);
    norms.emplace_back(out_channels);
    ch = out_channels;
  }
  relus_.resize(kernel_sizes.size() - 1);
  if (projection_) {
    shortcut_conv = Conv1d<T>(in_channels, out_channels, 1);
    shortcut_norm = BatchNorm1d<T>(out_channels);
  }
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, Mode mode, int block_index,
                                    std::vector<LayerTrace>* trace) {
  auto record = [&](const char* kind, const Conv1d<T>* conv, const Tensor<T>& in,
                    const Tensor<T>& out) {
    if (!trace) return;
    LayerTrace t;
    t.block = block_index;
    t.kind = kind;
    if (conv) {
      t.kernel = conv->kernel();
      t.stride = conv->stride;
      t.pad = conv->pad;
    }
    t.input = Shape(in.shape().begin() + 1, in.shape().end());
    t.output = Shape(out.shape().begin() + 1, out.shape().end());
    trace->push_back(std::move(t));
  };

  Tensor<T> h = x;
  const std::size_t stages = convs.size();
  for (std::size_t s = 0; s < stages; ++s) {
    Tensor<T> c = convs[s].forward(h);
    record("conv", &convs[s], h, c);
    Tensor<T> n = norms[s].forward(c, mode);
    if (s + 1 < stages) {
      h = relus_[s].forward(n);
      record("bn+relu", nullptr, c, h);
    } else {
      record("bn", nullptr, c, n);
      h = std::move(n);
    }
  }

  Tensor<T> shortcut;
  if (projection_) {
    Tensor<T> c = shortcut_conv.forward(x);
    record("shortcut-conv", &shortcut_conv, x, c);
    shortcut = shortcut_norm.forward(c, mode);
    record("shortcut-bn", nullptr, c, shortcut);
  } else {
    shortcut = x;
  }
  if (shortcut.shape() != h.shape()) {
    throw ShapeError("residual block: shortcut " + shape_str(shortcut.shape()) +
                     " does not match main path " + shape_str(h.shape()));
  }
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += shortcut[i];
  Tensor<T> y = out_relu_.forward(h);
  record("add+relu", nullptr, h, y);
  return y;
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g_sum = out_relu_.backward(grad_out);

  Tensor<T> g = g_sum;
  for (std::size_t s = convs.size(); s-- > 0;) {
    if (s + 1 < convs.size()) g = relus_[s].backward(g);
    g = norms[s].backward(g);
    g = convs[s].backward(g);
  }

  if (projection_) {
    Tensor<T> gs = shortcut_conv.backward(shortcut_norm.backward(g_sum));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gs[i];
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += g_sum[i];
  }
  return g;
}

template <typename T>
void ResidualBlock<T>::init(std::mt19937_64& rng) {
  for (auto& c : convs) c.init(rng);
  if (projection_) shortcut_conv.init(rng);
}

template <typename T>
void ResidualBlock<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& params) {
  for (std::size_t s = 0; s < convs.size(); ++s) {
    convs[s].collect(prefix + ".conv" + std::to_string(s), params);
    norms[s].collect(prefix + ".bn" + std::to_string(s), params);
  }
  if (projection_) {
    shortcut_conv.collect(prefix + ".shortcut.conv", params);
    shortcut_norm.collect(prefix + ".shortcut.bn", params);
  }
}

template <typename T>
void ResidualBlock<T>::collect_buffers(const std::string& prefix,
                                       std::vector<NamedTensor<T>>& buffers) {
  for (std::size_t s = 0; s < norms.size(); ++s) {
    norms[s].collect_buffers(prefix + ".bn" + std::to_string(s), buffers);
  }
  if (projection_) shortcut_norm.collect_buffers(prefix + ".shortcut.bn", buffers);
}

template <typename T>
void ResidualBlock<T>::append_masks(std::vector<bool>& out) const {
  for (const auto& r : relus_) out.insert(out.end(), r.mask().begin(), r.mask().end());
  out.insert(out.end(), out_relu_.mask().begin(), out_relu_.mask().end());
}

// ---- Backbone --------------------------------------------------------------

template <typename T>
Backbone<T>::Backbone(BackboneConfig config) : config_(std::move(config)) {
  config_.validate();
  input_norm = BatchNorm1d<T>(config_.in_channels);
  std::size_t ch = config_.in_channels;
  for (std::size_t out : config_.block_channels) {
    blocks.emplace_back(ch, out, config_.kernel_sizes);
    ch = out;
  }
}

template <typename T>
Tensor<T> Backbone<T>::forward(const Tensor<T>& x, Mode mode, std::vector<LayerTrace>* trace) {
  require_shape(x, 3, "backbone input");
  Tensor<T> h = input_norm.forward(x, mode);
  if (trace) {
    trace->push_back({-1, "bn", 0, 0, 0, Shape(x.shape().begin() + 1, x.shape().end()),
                      Shape(h.shape().begin() + 1, h.shape().end())});
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    h = blocks[b].forward(h, mode, static_cast<int>(b), trace);
  }
  ready_ = true;
  return pool_.forward(h);
}

template <typename T>
Tensor<T> Backbone<T>::backward(const Tensor<T>& grad_out) {
  if (!ready_) throw StateError("backbone: backward called before forward");
  Tensor<T> g = pool_.backward(grad_out);
  for (std::size_t b = blocks.size(); b-- > 0;) g = blocks[b].backward(g);
  return input_norm.backward(g);
}

template <typename T>
void Backbone<T>::init(std::mt19937_64& rng) {
  for (auto& b : blocks) b.init(rng);
}

template <typename T>
std::vector<NamedTensor<T>> Backbone<T>::parameters() {
  std::vector<NamedTensor<T>> params;
  input_norm.collect("input_bn", params);
  for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].collect("block" + std::to_string(b), params);
  return params;
}

template <typename T>
std::vector<NamedTensor<T>> Backbone<T>::buffers() {
  std::vector<NamedTensor<T>> buffers;
  input_norm.collect_buffers("input_bn", buffers);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].collect_buffers("block" + std::to_string(b), buffers);
  }
  return buffers;
}

template <typename T>
void Backbone<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

template <typename T>
std::vector<bool> Backbone<T>::relu_masks() const {
  std::vector<bool> masks;
  for (const auto& b : blocks) b.append_masks(masks);
  return masks;
}

template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace ecr
