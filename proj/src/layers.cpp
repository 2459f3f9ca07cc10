#include "ecr/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>

namespace ecr {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRowMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapRowMat = Eigen::Map<const RowMat<T>>;

// Upper bound on the im2col width processed per GEMM.
constexpr std::size_t kMaxColumns = 8192;

std::size_t chunk_size(std::size_t batch, std::size_t out_len) {
  return std::clamp<std::size_t>(kMaxColumns / std::max<std::size_t>(out_len, 1), 1,
                                 std::max<std::size_t>(batch, 1));
}

// Range of output positions t for which t*stride + k - pad lies in [0, len).
struct ValidRange {
  std::size_t lo, hi;
};

ValidRange valid_range(std::size_t k, std::size_t pad, std::size_t stride, std::size_t len,
                       std::size_t out_len) {
  const auto offset = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
  const auto s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
  std::ptrdiff_t last = static_cast<std::ptrdiff_t>(len) - 1 - offset;
  std::ptrdiff_t hi = last < 0 ? 0 : last / s + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_len));
  if (lo > hi) lo = hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// col[(c*K + k), bi*out_len + t] = x[b0+bi, c, t*stride + k - pad], zero outside.
template <typename T>
void im2col(const T* x, std::size_t nb, std::size_t cin, std::size_t len, std::size_t kernel,
            std::size_t stride, std::size_t pad, std::size_t out_len, T* col) {
  const std::size_t width = nb * out_len;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t k = 0; k < kernel; ++k) {
      T* row = col + (c * kernel + k) * width;
      const auto [lo, hi] = valid_range(k, pad, stride, len, out_len);
      for (std::size_t bi = 0; bi < nb; ++bi) {
        const T* src = x + (bi * cin + c) * len;
        T* dst = row + bi * out_len;
        std::fill(dst, dst + lo, T{0});
        for (std::size_t t = lo; t < hi; ++t) dst[t] = src[t * stride + k - pad];
        std::fill(dst + hi, dst + out_len, T{0});
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::size_t nb, std::size_t cin, std::size_t len, std::size_t kernel,
            std::size_t stride, std::size_t pad, std::size_t out_len, T* dx) {
  const std::size_t width = nb * out_len;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t k = 0; k < kernel; ++k) {
      const T* row = col + (c * kernel + k) * width;
      const auto [lo, hi] = valid_range(k, pad, stride, len, out_len);
      for (std::size_t bi = 0; bi < nb; ++bi) {
        T* dst = dx + (bi * cin + c) * len;
        const T* src = row + bi * out_len;
        for (std::size_t t = lo; t < hi; ++t) dst[t * stride + k - pad] += src[t];
      }
    }
  }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad) {
  require_shape(x, 3, "conv1d input");
  require_shape(w, 3, "conv1d weight");
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("conv1d: input has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                     std::to_string(w.dim(1)));
  }
  if (stride == 0) throw ShapeError("conv1d: stride must be positive");
  if (x.dim(2) + 2 * pad < w.dim(2)) {
    throw ShapeError("conv1d: kernel " + std::to_string(w.dim(2)) + " exceeds padded length " +
                     std::to_string(x.dim(2) + 2 * pad));
  }
}

template <typename T>
void kaiming_uniform(Tensor<T>& w, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : w.data()) v = static_cast<T>(dist(rng));
}

template <typename T>
void add_param(const std::string& name, Tensor<T>& t, std::vector<NamedTensor<T>>& out) {
  t.ensure_grad();
  out.push_back({name, &t});
}

void require_ready(bool ready, const char* layer) {
  if (!ready) throw StateError(std::string(layer) + ": backward called before forward");
}

}  // namespace

// ---- stateless kernels -----------------------------------------------------

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                 std::size_t pad) {
  check_conv_shapes(x, w, stride, pad);
  const std::size_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t cout = w.dim(0), kernel = w.dim(2);
  if (b.size() != cout) throw ShapeError("conv1d: bias size does not match output channels");
  const std::size_t out_len = (len + 2 * pad - kernel) / stride + 1;

  Tensor<T> y({batch, cout, out_len});
  ConstMapRowMat<T> wmat(w.ptr(), cout, cin * kernel);
  const std::size_t chunk = chunk_size(batch, out_len);
  std::vector<T> col;
  RowMat<T> out;
  for (std::size_t b0 = 0; b0 < batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, batch - b0);
    const std::size_t width = nb * out_len;
    col.resize(cin * kernel * width);
    im2col(x.ptr() + b0 * cin * len, nb, cin, len, kernel, stride, pad, out_len, col.data());
    out.noalias() = wmat * ConstMapRowMat<T>(col.data(), cin * kernel, width);
    for (std::size_t bi = 0; bi < nb; ++bi) {
      for (std::size_t o = 0; o < cout; ++o) {
        const T* src = out.data() + o * width + bi * out_len;
        T* dst = &y.at3(b0 + bi, o, 0);
        const T bias = b[o];
        for (std::size_t t = 0; t < out_len; ++t) dst[t] = src[t] + bias;
      }
    }
  }
  return y;
}

template <typename T>
Conv1dGrads<T> conv1d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out,
                               std::size_t stride, std::size_t pad) {
  check_conv_shapes(x, w, stride, pad);
  const std::size_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t cout = w.dim(0), kernel = w.dim(2);
  const std::size_t out_len = (len + 2 * pad - kernel) / stride + 1;
  if (grad_out.shape() != Shape{batch, cout, out_len}) {
    throw ShapeError("conv1d backward: gradient shape " + shape_str(grad_out.shape()) +
                     " does not match output");
  }

  Conv1dGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({cout})};
  ConstMapRowMat<T> wmat(w.ptr(), cout, cin * kernel);
  MapRowMat<T> dw(g.weight.ptr(), cout, cin * kernel);
  const std::size_t chunk = chunk_size(batch, out_len);
  std::vector<T> col;
  RowMat<T> dy;
  RowMat<T> dcol;
  for (std::size_t b0 = 0; b0 < batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, batch - b0);
    const std::size_t width = nb * out_len;
    col.resize(cin * kernel * width);
    im2col(x.ptr() + b0 * cin * len, nb, cin, len, kernel, stride, pad, out_len, col.data());
    dy.resize(cout, width);
    for (std::size_t bi = 0; bi < nb; ++bi) {
      for (std::size_t o = 0; o < cout; ++o) {
        const T* src = &grad_out.at3(b0 + bi, o, 0);
        std::copy(src, src + out_len, dy.data() + o * width + bi * out_len);
      }
    }
    for (std::size_t o = 0; o < cout; ++o) g.bias[o] += dy.row(o).sum();
    ConstMapRowMat<T> colmat(col.data(), cin * kernel, width);
    dw.noalias() += dy * colmat.transpose();
    dcol.noalias() = wmat.transpose() * dy;
    col2im(dcol.data(), nb, cin, len, kernel, stride, pad, out_len, g.input.ptr() + b0 * cin * len);
  }
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] < T{0} ? T{0} : x[i];  // NaN passes through
  return y;
}

template <typename T>
Tensor<T> gap(const Tensor<T>& x) {
  require_shape(x, 3, "gap input");
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (len == 0) throw ShapeError("gap: empty temporal axis");
  Tensor<T> y({batch, ch});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* src = &x.at3(b, c, 0);
      T sum{0};
      for (std::size_t t = 0; t < len; ++t) sum += src[t];
      y[b * ch + c] = sum / static_cast<T>(len);
    }
  }
  return y;
}

template <typename T>
Tensor<T> fc(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_shape(x, 2, "fc input");
  require_shape(w, 2, "fc weight");
  if (x.dim(1) != w.dim(0) || b.size() != w.dim(1)) {
    throw ShapeError("fc: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()) + " and bias " + shape_str(b.shape()));
  }
  const std::size_t batch = x.dim(0), d = w.dim(0), c = w.dim(1);
  Tensor<T> y({batch, c});
  MapRowMat<T> ymat(y.ptr(), batch, c);
  ymat.noalias() = ConstMapRowMat<T>(x.ptr(), batch, d) * ConstMapRowMat<T>(w.ptr(), d, c);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < c; ++j) ymat(i, j) += b[j];
  return y;
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x) {
  require_shape(x, 2, "l2_normalize input");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += static_cast<double>(x[i * d + j]) * x[i * d + j];
    const T denom = static_cast<T>(std::max(std::sqrt(sq), kL2NormFloor));
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] = x[i * d + j] / denom;
  }
  return y;
}

// ---- Conv1d ----------------------------------------------------------------

template <typename T>
Conv1d<T>::Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t stride_)
    : weight({out_channels, in_channels, kernel}),
      bias({out_channels}),
      stride(stride_),
      pad((kernel - 1) / 2) {}

template <typename T>
Tensor<T> Conv1d<T>::forward(const Tensor<T>& x) {
  input_ = x;
  ready_ = true;
  return conv1d(x, weight, bias, stride, pad);
}

template <typename T>
Tensor<T> Conv1d<T>::backward(const Tensor<T>& grad_out) {
  require_ready(ready_, "conv1d");
  auto g = conv1d_backward(input_, weight, grad_out, stride, pad);
  weight.ensure_grad();
  bias.ensure_grad();
  for (std::size_t i = 0; i < weight.size(); ++i) weight.grad()[i] += g.weight[i];
  for (std::size_t i = 0; i < bias.size(); ++i) bias.grad()[i] += g.bias[i];
  return std::move(g.input);
}

template <typename T>
void Conv1d<T>::init(std::mt19937_64& rng) {
  kaiming_uniform(weight, in_channels() * kernel(), rng);
  bias.fill(T{0});
}

template <typename T>
void Conv1d<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& params) {
  add_param(prefix + ".weight", weight, params);
  add_param(prefix + ".bias", bias, params);
}

// ---- BatchNorm1d -----------------------------------------------------------

template <typename T>
BatchNorm1d<T>::BatchNorm1d(std::size_t channels)
    : gamma({channels}, T{1}),
      beta({channels}, T{0}),
      running_mean({channels}, T{0}),
      running_var({channels}, T{1}) {}

template <typename T>
Tensor<T> BatchNorm1d<T>::forward(const Tensor<T>& x, Mode mode) {
  require_shape(x, 3, "batchnorm1d input");
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (ch != channels()) {
    throw ShapeError("batchnorm1d: input has " + std::to_string(ch) + " channels, layer has " +
                     std::to_string(channels()));
  }
  const std::size_t n = batch * len;
  if (mode == Mode::Train && n < 2) {
    throw ShapeError("batchnorm1d: training needs at least 2 values per channel");
  }

  xhat_ = Tensor<T>(x.shape());
  inv_std_.assign(ch, T{0});
  Tensor<T> y(x.shape());
  for (std::size_t c = 0; c < ch; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < len; ++t) sum += x.at3(b, c, t);
      mean = sum / static_cast<double>(n);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < len; ++t) {
          const double d = x.at3(b, c, t) - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(n);
      const double unbiased = sq / static_cast<double>(n - 1);
      running_mean[c] = static_cast<T>((1.0 - kMomentum) * running_mean[c] + kMomentum * mean);
      running_var[c] = static_cast<T>((1.0 - kMomentum) * running_var[c] + kMomentum * unbiased);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + kEps));
    const T m = static_cast<T>(mean);
    inv_std_[c] = inv;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < len; ++t) {
        const T h = (x.at3(b, c, t) - m) * inv;
        xhat_.at3(b, c, t) = h;
        y.at3(b, c, t) = gamma[c] * h + beta[c];
      }
    }
  }
  mode_ = mode;
  ready_ = true;
  return y;
}

template <typename T>
Tensor<T> BatchNorm1d<T>::backward(const Tensor<T>& grad_out) {
  require_ready(ready_, "batchnorm1d");
  if (grad_out.shape() != xhat_.shape()) throw ShapeError("batchnorm1d backward: shape mismatch");
  const std::size_t batch = xhat_.dim(0), ch = xhat_.dim(1), len = xhat_.dim(2);
  const double n = static_cast<double>(batch * len);
  gamma.ensure_grad();
  beta.ensure_grad();
  Tensor<T> dx(xhat_.shape());
  for (std::size_t c = 0; c < ch; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < len; ++t) {
        const double dy = grad_out.at3(b, c, t);
        sum_dy += dy;
        sum_dy_xhat += dy * xhat_.at3(b, c, t);
      }
    }
    gamma.grad()[c] += static_cast<T>(sum_dy_xhat);
    beta.grad()[c] += static_cast<T>(sum_dy);
    const double scale = static_cast<double>(gamma[c]) * inv_std_[c];
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < len; ++t) {
        const double dy = grad_out.at3(b, c, t);
        double g;
        if (mode_ == Mode::Train) {
          g = scale * (dy - sum_dy / n - xhat_.at3(b, c, t) * sum_dy_xhat / n);
        } else {
          g = scale * dy;
        }
        dx.at3(b, c, t) = static_cast<T>(g);
      }
    }
  }
  return dx;
}

template <typename T>
void BatchNorm1d<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& params) {
  add_param(prefix + ".gamma", gamma, params);
  add_param(prefix + ".beta", beta, params);
}

template <typename T>
void BatchNorm1d<T>::collect_buffers(const std::string& prefix,
                                     std::vector<NamedTensor<T>>& buffers) {
  buffers.push_back({prefix + ".running_mean", &running_mean});
  buffers.push_back({prefix + ".running_var", &running_var});
}

// ---- Relu ------------------------------------------------------------------

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x) {
  shape_ = x.shape();
  mask_.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mask_[i] = x[i] > T{0};
  ready_ = true;
  return relu(x);
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out) {
  require_ready(ready_, "relu");
  if (grad_out.shape() != shape_) throw ShapeError("relu backward: shape mismatch");
  Tensor<T> dx(shape_);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = mask_[i] ? grad_out[i] : T{0};
  return dx;
}

// ---- GlobalAvgPool ---------------------------------------------------------

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  auto y = gap(x);
  shape_ = x.shape();
  ready_ = true;
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  require_ready(ready_, "gap");
  const std::size_t batch = shape_[0], ch = shape_[1], len = shape_[2];
  if (grad_out.shape() != Shape{batch, ch}) throw ShapeError("gap backward: shape mismatch");
  Tensor<T> dx(shape_);
  const T inv = T{1} / static_cast<T>(len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T g = grad_out[b * ch + c] * inv;
      T* dst = &dx.at3(b, c, 0);
      std::fill(dst, dst + len, g);
    }
  }
  return dx;
}

// ---- Linear ----------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features)
    : weight({in_features, out_features}), bias({out_features}) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  input_ = x;
  ready_ = true;
  return fc(x, weight, bias);
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  require_ready(ready_, "fc");
  const std::size_t batch = input_.dim(0), d = weight.dim(0), c = weight.dim(1);
  if (grad_out.shape() != Shape{batch, c}) throw ShapeError("fc backward: shape mismatch");
  weight.ensure_grad();
  bias.ensure_grad();
  ConstMapRowMat<T> x(input_.ptr(), batch, d);
  ConstMapRowMat<T> dy(grad_out.ptr(), batch, c);
  MapRowMat<T>(weight.grad().data(), d, c).noalias() += x.transpose() * dy;
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < c; ++j) bias.grad()[j] += dy(i, j);
  Tensor<T> dx({batch, d});
  MapRowMat<T>(dx.ptr(), batch, d).noalias() =
      dy * ConstMapRowMat<T>(weight.ptr(), d, c).transpose();
  return dx;
}

template <typename T>
void Linear<T>::init(std::mt19937_64& rng) {
  kaiming_uniform(weight, in_features(), rng);
  bias.fill(T{0});
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& params) {
  add_param(prefix + ".weight", weight, params);
  add_param(prefix + ".bias", bias, params);
}

// ---- L2Normalize -----------------------------------------------------------

template <typename T>
Tensor<T> L2Normalize<T>::forward(const Tensor<T>& x) {
  output_ = l2_normalize(x);
  const std::size_t rows = x.dim(0), d = x.dim(1);
  norms_.assign(rows, T{0});
  for (std::size_t i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += static_cast<double>(x[i * d + j]) * x[i * d + j];
    norms_[i] = static_cast<T>(std::sqrt(sq));
  }
  ready_ = true;
  return output_;
}

template <typename T>
Tensor<T> L2Normalize<T>::backward(const Tensor<T>& grad_out) {
  require_ready(ready_, "l2_normalize");
  if (grad_out.shape() != output_.shape()) throw ShapeError("l2_normalize backward: shape mismatch");
  const std::size_t rows = output_.dim(0), d = output_.dim(1);
  Tensor<T> dx(output_.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    const T* y = output_.ptr() + i * d;
    const T* dy = grad_out.ptr() + i * d;
    T* out = dx.ptr() + i * d;
    if (static_cast<double>(norms_[i]) > kL2NormFloor) {
      T dot{0};
      for (std::size_t j = 0; j < d; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < d; ++j) out[j] = (dy[j] - y[j] * dot) / norms_[i];
    } else {
      const T inv = static_cast<T>(1.0 / kL2NormFloor);
      for (std::size_t j = 0; j < d; ++j) out[j] = dy[j] * inv;
    }
  }
  return dx;
}

#define ECR_INSTANTIATE_LAYERS(T)                                                                \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,   \
                            std::size_t);                                                        \
  template Conv1dGrads<T> conv1d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                          std::size_t, std::size_t);                             \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> gap(const Tensor<T>&);                                                      \
  template Tensor<T> fc(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> l2_normalize(const Tensor<T>&);                                             \
  template class Conv1d<T>;                                                                      \
  template class BatchNorm1d<T>;                                                                 \
  template class Relu<T>;                                                                        \
  template class GlobalAvgPool<T>;                                                               \
  template class Linear<T>;                                                                      \
  template class L2Normalize<T>;

ECR_INSTANTIATE_LAYERS(float)
ECR_INSTANTIATE_LAYERS(double)

}  // namespace ecr
