// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "satcn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace satcn::nn {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_matrix(const Tensor& t, const char* what) {
  require(t.rank() == 2, std::string(what) + ": expected a matrix, got " + shape_string(t.shape()));
}

void require_vector(const Tensor& t, std::size_t n, const char* what) {
  require(t.size() == n, std::string(what) + ": expected " + std::to_string(n) + " entries, got " +
                             shape_string(t.shape()));
}

}  // namespace

Parameter& ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Tensor(value.shape());
  p->value = std::move(value);
  p->trainable = trainable;
  index_.emplace(p->name, params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

std::optional<std::size_t> ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->trainable) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

Tensor pointwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_matrix(x, "pointwise_conv input");
  require_matrix(weight, "pointwise_conv weight");
  require(weight.cols() == x.rows(), "pointwise_conv: weight " + shape_string(weight.shape()) +
                                         " does not accept input " + shape_string(x.shape()));
  require_vector(bias, weight.rows(), "pointwise_conv bias");
  const std::size_t out_ch = weight.rows(), in_ch = x.rows(), frames = x.cols();
  Tensor y = Tensor::matrix(out_ch, frames);
  for (std::size_t c = 0; c < out_ch; ++c) {
    double* yr = y.data() + c * frames;
    std::fill(yr, yr + frames, bias[c]);
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double w = weight(c, i);
      const double* xr = x.data() + i * frames;
      for (std::size_t t = 0; t < frames; ++t) yr[t] += w * xr[t];
    }
  }
  return y;
}

Tensor pointwise_conv_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                               Tensor& dweight, Tensor& dbias) {
  const std::size_t out_ch = weight.rows(), in_ch = x.rows(), frames = x.cols();
  require(dy.rows() == out_ch && dy.cols() == frames, "pointwise_conv_backward: bad dy shape");
  Tensor dx = Tensor::matrix(in_ch, frames);
  for (std::size_t c = 0; c < out_ch; ++c) {
    const double* g = dy.data() + c * frames;
    double bsum = 0.0;
    for (std::size_t t = 0; t < frames; ++t) bsum += g[t];
    dbias[c] += bsum;
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* xr = x.data() + i * frames;
      double* dxr = dx.data() + i * frames;
      const double w = weight(c, i);
      double acc = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        acc += g[t] * xr[t];
        dxr[t] += w * g[t];
      }
      dweight(c, i) += acc;
    }
  }
  return dx;
}

Tensor depthwise_dconv(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                       std::size_t dilation) {
  require_matrix(x, "depthwise_dconv input");
  require_matrix(kernel, "depthwise_dconv kernel");
  require(kernel.rows() == x.rows(), "depthwise_dconv: kernel rows must equal channels");
  require(kernel.cols() % 2 == 1, "depthwise_dconv: kernel width must be odd, got " +
                                      std::to_string(kernel.cols()));
  require(dilation >= 1, "depthwise_dconv: dilation must be at least 1");
  require_vector(bias, x.rows(), "depthwise_dconv bias");
  const std::size_t channels = x.rows(), frames = x.cols(), taps = kernel.cols();
  const auto half = static_cast<std::ptrdiff_t>((taps - 1) / 2);
  const auto n = static_cast<std::ptrdiff_t>(frames);
  Tensor y = Tensor::matrix(channels, frames);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xr = x.data() + c * frames;
    double* yr = y.data() + c * frames;
    std::fill(yr, yr + frames, bias[c]);
    for (std::size_t p = 0; p < taps; ++p) {
      const double k = kernel(c, p);
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(p) - half) * static_cast<std::ptrdiff_t>(dilation);
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - off);
      for (std::ptrdiff_t t = lo; t < hi; ++t) yr[t] += k * xr[t + off];
    }
  }
  return y;
}

Tensor depthwise_dconv_backward(const Tensor& x, const Tensor& kernel, std::size_t dilation,
                                const Tensor& dy, Tensor& dkernel, Tensor& dbias) {
  const std::size_t channels = x.rows(), frames = x.cols(), taps = kernel.cols();
  require(dy.same_shape(x), "depthwise_dconv_backward: bad dy shape");
  const auto half = static_cast<std::ptrdiff_t>((taps - 1) / 2);
  const auto n = static_cast<std::ptrdiff_t>(frames);
  Tensor dx = Tensor::matrix(channels, frames);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xr = x.data() + c * frames;
    const double* g = dy.data() + c * frames;
    double* dxr = dx.data() + c * frames;
    double bsum = 0.0;
    for (std::size_t t = 0; t < frames; ++t) bsum += g[t];
    dbias[c] += bsum;
    for (std::size_t p = 0; p < taps; ++p) {
      const double k = kernel(c, p);
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(p) - half) * static_cast<std::ptrdiff_t>(dilation);
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - off);
      double acc = 0.0;
      for (std::ptrdiff_t t = lo; t < hi; ++t) {
        acc += g[t] * xr[t + off];
        dxr[t + off] += k * g[t];
      }
      dkernel(c, p) += acc;
    }
  }
  return dx;
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  require_matrix(x, "prelu input");
  require_vector(slope, x.rows(), "prelu slope");
  Tensor y = x;
  for (std::size_t c = 0; c < x.rows(); ++c) {
    const double a = slope[c];
    for (double& v : y.row(c))
      if (v < 0.0) v *= a;
  }
  return y;
}

Tensor prelu_backward(const Tensor& x, const Tensor& slope, const Tensor& dy, Tensor& dslope) {
  require(dy.same_shape(x), "prelu_backward: bad dy shape");
  Tensor dx = dy;
  for (std::size_t c = 0; c < x.rows(); ++c) {
    const double a = slope[c];
    auto xr = x.row(c);
    auto dxr = dx.row(c);
    double acc = 0.0;
    for (std::size_t t = 0; t < xr.size(); ++t) {
      if (xr[t] < 0.0) {
        acc += dxr[t] * xr[t];
        dxr[t] *= a;
      }
    }
    dslope[c] += acc;
  }
  return dx;
}

namespace {

std::vector<Tensor> normalize_with(std::span<const Tensor> xs, const std::vector<double>& mean,
                                   const std::vector<double>& inv_std, const Tensor& gamma,
                                   const Tensor& beta, BatchNormCache* cache) {
  std::vector<Tensor> out;
  out.reserve(xs.size());
  if (cache) cache->normalized.clear();
  for (const Tensor& x : xs) {
    Tensor norm = x;
    Tensor y = Tensor::matrix(x.rows(), x.cols());
    for (std::size_t c = 0; c < x.rows(); ++c) {
      auto nr = norm.row(c);
      auto yr = y.row(c);
      for (std::size_t t = 0; t < nr.size(); ++t) {
        nr[t] = (nr[t] - mean[c]) * inv_std[c];
        yr[t] = gamma[c] * nr[t] + beta[c];
      }
    }
    if (cache) cache->normalized.push_back(std::move(norm));
    out.push_back(std::move(y));
  }
  return out;
}

std::size_t check_batch(std::span<const Tensor> xs, std::size_t channels) {
  require(!xs.empty(), "batch_norm: empty batch");
  std::size_t count = 0;
  for (const Tensor& x : xs) {
    require_matrix(x, "batch_norm input");
    require(x.rows() == channels, "batch_norm: channel mismatch");
    count += x.cols();
  }
  require(count > 0, "batch_norm: no frames in batch");
  return count;
}

}  // namespace

std::vector<Tensor> batch_norm(std::span<const Tensor> xs, const Tensor& gamma, const Tensor& beta,
                               Tensor& running_mean, Tensor& running_var, Mode mode,
                               BatchNormCache* cache) {
  const std::size_t channels = gamma.size();
  const std::size_t count = check_batch(xs, channels);
  std::vector<double> mean(channels, 0.0), inv_std(channels, 0.0);
  if (mode == Mode::train) {
    std::vector<double> var(channels, 0.0);
    for (const Tensor& x : xs)
      for (std::size_t c = 0; c < channels; ++c)
        for (double v : x.row(c)) mean[c] += v;
    for (double& m : mean) m /= static_cast<double>(count);
    for (const Tensor& x : xs)
      for (std::size_t c = 0; c < channels; ++c)
        for (double v : x.row(c)) var[c] += (v - mean[c]) * (v - mean[c]);
    const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
    for (std::size_t c = 0; c < channels; ++c) {
      var[c] /= static_cast<double>(count);
      inv_std[c] = 1.0 / std::sqrt(var[c] + kBatchNormEps);
      running_mean[c] = storage_precision((1.0 - kBatchNormMomentum) * running_mean[c] +
                                          kBatchNormMomentum * mean[c]);
      running_var[c] = storage_precision((1.0 - kBatchNormMomentum) * running_var[c] +
                                         kBatchNormMomentum * var[c] * unbias);
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + kBatchNormEps);
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->inv_std = inv_std;
    cache->count = count;
  }
  return normalize_with(xs, mean, inv_std, gamma, beta, cache);
}

std::vector<Tensor> batch_norm(std::span<const Tensor> xs, const Tensor& gamma, const Tensor& beta,
                               const Tensor& running_mean, const Tensor& running_var) {
  const std::size_t channels = gamma.size();
  check_batch(xs, channels);
  std::vector<double> mean(channels), inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    mean[c] = running_mean[c];
    inv_std[c] = 1.0 / std::sqrt(running_var[c] + kBatchNormEps);
  }
  return normalize_with(xs, mean, inv_std, gamma, beta, nullptr);
}

std::vector<Tensor> batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                        std::span<const Tensor> dys, Tensor& dgamma, Tensor& dbeta) {
  require(dys.size() == cache.normalized.size(), "batch_norm_backward: batch size mismatch");
  const std::size_t channels = gamma.size();
  std::vector<double> sum_dy(channels, 0.0), sum_dy_xhat(channels, 0.0);
  for (std::size_t b = 0; b < dys.size(); ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      auto g = dys[b].row(c);
      auto xh = cache.normalized[b].row(c);
      for (std::size_t t = 0; t < g.size(); ++t) {
        sum_dy[c] += g[t];
        sum_dy_xhat[c] += g[t] * xh[t];
      }
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    dgamma[c] += sum_dy_xhat[c];
    dbeta[c] += sum_dy[c];
  }
  std::vector<Tensor> dxs;
  dxs.reserve(dys.size());
  const double n = static_cast<double>(cache.count);
  for (std::size_t b = 0; b < dys.size(); ++b) {
    Tensor dx = Tensor::matrix(dys[b].rows(), dys[b].cols());
    for (std::size_t c = 0; c < channels; ++c) {
      auto g = dys[b].row(c);
      auto xh = cache.normalized[b].row(c);
      auto out = dx.row(c);
      const double k = gamma[c] * cache.inv_std[c];
      if (cache.mode == Mode::train) {
        const double mean_g = sum_dy[c] / n;
        const double mean_gx = sum_dy_xhat[c] / n;
        for (std::size_t t = 0; t < g.size(); ++t) out[t] = k * (g[t] - mean_g - xh[t] * mean_gx);
      } else {
        for (std::size_t t = 0; t < g.size(); ++t) out[t] = k * g[t];
      }
    }
    dxs.push_back(std::move(dx));
  }
  return dxs;
}

Tensor global_layer_norm(const Tensor& y, const Tensor& gamma, const Tensor& beta, double eps,
                         GlobalNormCache* cache) {
  require_matrix(y, "global_layer_norm input");
  require_vector(gamma, y.rows(), "global_layer_norm gamma");
  require_vector(beta, y.rows(), "global_layer_norm beta");
  const double n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y.values()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : y.values()) var += (v - mean) * (v - mean);
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + eps);

  Tensor norm = Tensor::matrix(y.rows(), y.cols());
  Tensor out = Tensor::matrix(y.rows(), y.cols());
  for (std::size_t f = 0; f < y.rows(); ++f) {
    auto yr = y.row(f);
    auto nr = norm.row(f);
    auto outr = out.row(f);
    for (std::size_t t = 0; t < yr.size(); ++t) {
      nr[t] = (yr[t] - mean) * inv_std;
      outr[t] = nr[t] * gamma[f] + beta[f];
    }
  }
  if (cache) {
    cache->normalized = std::move(norm);
    cache->inv_std = inv_std;
  }
  return out;
}

Tensor global_layer_norm_backward(const GlobalNormCache& cache, const Tensor& gamma,
                                  const Tensor& dy, Tensor& dgamma, Tensor& dbeta) {
  require(dy.same_shape(cache.normalized), "global_layer_norm_backward: bad dy shape");
  const double n = static_cast<double>(dy.size());
  Tensor dnorm = Tensor::matrix(dy.rows(), dy.cols());
  double sum = 0.0, sum_x = 0.0;
  for (std::size_t f = 0; f < dy.rows(); ++f) {
    auto g = dy.row(f);
    auto xh = cache.normalized.row(f);
    auto dn = dnorm.row(f);
    double gsum = 0.0, gxsum = 0.0;
    for (std::size_t t = 0; t < g.size(); ++t) {
      gsum += g[t];
      gxsum += g[t] * xh[t];
      dn[t] = g[t] * gamma[f];
      sum += dn[t];
      sum_x += dn[t] * xh[t];
    }
    dgamma[f] += gxsum;
    dbeta[f] += gsum;
  }
  const double mean_g = sum / n, mean_gx = sum_x / n;
  for (std::size_t i = 0; i < dnorm.size(); ++i) {
    dnorm[i] = cache.inv_std * (dnorm[i] - mean_g - cache.normalized[i] * mean_gx);
  }
  return dnorm;
}

Tensor softmax_columns(const Tensor& w) {
  require_matrix(w, "softmax_columns input");
  const std::size_t rows = w.rows(), cols = w.cols();
  Tensor out = Tensor::matrix(rows, cols);
  std::vector<double> peak(cols, -INFINITY), sum(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) peak[j] = std::max(peak[j], w(i, j));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = std::exp(w(i, j) - peak[j]);
      out(i, j) = e;
      sum[j] += e;
    }
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) /= sum[j];
  return out;
}

Tensor softmax_columns_backward(const Tensor& out, const Tensor& dout) {
  require(out.same_shape(dout), "softmax_columns_backward: shape mismatch");
  const std::size_t rows = out.rows(), cols = out.cols();
  std::vector<double> dot(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) dot[j] += out(i, j) * dout(i, j);
  Tensor dw = Tensor::matrix(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) dw(i, j) = out(i, j) * (dout(i, j) - dot[j]);
  return dw;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return y;
}

Tensor sigmoid_backward(const Tensor& out, const Tensor& dout) {
  require(out.same_shape(dout), "sigmoid_backward: shape mismatch");
  Tensor dx = dout;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= out[i] * (1.0 - out[i]);
  return dx;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  require(a.cols() == b.rows(), "matmul: inner dimensions differ, " + shape_string(a.shape()) +
                                    " x " + shape_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* cr = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      const double* br = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_transposed lhs");
  require_matrix(b, "matmul_transposed rhs");
  require(a.cols() == b.cols(), "matmul_transposed: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      c(i, j) = acc;
    }
  }
  return c;
}

Tensor transposed_matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "transposed_matmul lhs");
  require_matrix(b, "transposed_matmul rhs");
  require(a.rows() == b.rows(), "transposed_matmul: inner dimensions differ");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t p = 0; p < k; ++p) {
    const double* ar = a.data() + p * m;
    const double* br = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ar[i];
      double* cr = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc, Tensor& da, Tensor& db) {
  da = matmul_transposed(dc, b);
  db = transposed_matmul(a, dc);
}

double mean_abs_loss(const Tensor& a, const Tensor& target) {
  require_same_shape(a, target, "mean_abs_loss");
  require(a.size() > 0, "mean_abs_loss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - target[i]);
  return sum / static_cast<double>(a.size());
}

Tensor mean_abs_loss_backward(const Tensor& a, const Tensor& target, double scale) {
  require_same_shape(a, target, "mean_abs_loss_backward");
  Tensor g(a.shape());
  const double k = scale / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - target[i];
    g[i] = d > 0.0 ? k : (d < 0.0 ? -k : 0.0);
  }
  return g;
}

double finite_diff_check(const ScalarFunction& f, const Tensor& point, const GradCheckOptions& options) {
  Tensor analytic(point.shape());
  f(point, &analytic);
  std::vector<std::size_t> coords = options.coordinates;
  if (coords.empty()) {
    coords.resize(point.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  }
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i : coords) {
    if (std::abs(point[i]) < options.exclusion_band) continue;
    probe[i] = point[i] + options.step;
    const double up = f(probe, nullptr);
    probe[i] = point[i] - options.step;
    const double down = f(probe, nullptr);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * options.step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace satcn::nn
