// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "satcn/tensor.hpp"

namespace satcn::nn {

enum class Mode { train, eval };

/// Parameters are kept at single precision (stored in doubles) so the float32
/// checkpoint format round-trips them exactly.
inline double storage_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  /// Buffers such as batch-norm running statistics are persisted but not
  /// optimized or counted.
  bool trainable = true;
};

/// Named parameters in insertion order. Addresses are stable for the
/// lifetime of the store.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter& add(std::string name, Tensor value, bool trainable = true);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  std::optional<std::size_t> index_of(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  /// Trainable scalar count.
  std::size_t trainable_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Layer primitives. Every *_backward returns the gradient with respect to the
// layer input and accumulates (+=) parameter gradients into the given tensors.

/// y[c,t] = sum_i weight[c,i] x[i,t] + bias[c]
Tensor pointwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor pointwise_conv_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                               Tensor& dweight, Tensor& dbias);

/// Non-causal per-channel dilated convolution with "same" zero padding. The
/// kernel width must be odd.
Tensor depthwise_dconv(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                       std::size_t dilation);
Tensor depthwise_dconv_backward(const Tensor& x, const Tensor& kernel, std::size_t dilation,
                                const Tensor& dy, Tensor& dkernel, Tensor& dbias);

Tensor prelu(const Tensor& x, const Tensor& slope);
Tensor prelu_backward(const Tensor& x, const Tensor& slope, const Tensor& dy, Tensor& dslope);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct BatchNormCache {
  Mode mode = Mode::train;
  std::vector<Tensor> normalized;
  std::vector<double> inv_std;
  std::size_t count = 0;
};

/// Per-channel normalization over every (item, frame) position of the batch.
/// Train mode uses batch statistics and updates the running estimates
/// (momentum 0.1, unbiased variance); eval mode uses the running estimates.
std::vector<Tensor> batch_norm(std::span<const Tensor> xs, const Tensor& gamma, const Tensor& beta,
                               Tensor& running_mean, Tensor& running_var, Mode mode,
                               BatchNormCache* cache);
/// Eval-only overload; never touches the running estimates.
std::vector<Tensor> batch_norm(std::span<const Tensor> xs, const Tensor& gamma, const Tensor& beta,
                               const Tensor& running_mean, const Tensor& running_var);
std::vector<Tensor> batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                        std::span<const Tensor> dys, Tensor& dgamma, Tensor& dbeta);

inline constexpr double kGlobalNormEps = 1e-8;

struct GlobalNormCache {
  Tensor normalized;
  double inv_std = 0.0;
};

/// gLN: mean and variance over all entries jointly, per-row affine.
Tensor global_layer_norm(const Tensor& y, const Tensor& gamma, const Tensor& beta,
                         double eps = kGlobalNormEps, GlobalNormCache* cache = nullptr);
Tensor global_layer_norm_backward(const GlobalNormCache& cache, const Tensor& gamma,
                                  const Tensor& dy, Tensor& dgamma, Tensor& dbeta);

/// Softmax down each column (over the row index).
Tensor softmax_columns(const Tensor& w);
Tensor softmax_columns_backward(const Tensor& out, const Tensor& dout);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& out, const Tensor& dout);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_transposed(const Tensor& a, const Tensor& b);
/// a^T * b.
Tensor transposed_matmul(const Tensor& a, const Tensor& b);
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc, Tensor& da, Tensor& db);

double mean_abs_loss(const Tensor& a, const Tensor& target);
/// Gradient of scale * mean_abs_loss with respect to a; sign(0) = 0.
Tensor mean_abs_loss_backward(const Tensor& a, const Tensor& target, double scale = 1.0);

/// Value and (optionally) analytic gradient of a scalar function.
using ScalarFunction = std::function<double(const Tensor& point, Tensor* grad)>;

struct GradCheckOptions {
  double step = 1e-4;
  /// Coordinates with |point[i]| below this are skipped (kinks at zero).
  double exclusion_band = 0.0;
  /// When non-empty only these flat indices are checked.
  std::vector<std::size_t> coordinates;
};

/// Max over checked coordinates of |analytic - numeric| /
/// max(|analytic|, |numeric|, 1e-8), numeric by central differences.
double finite_diff_check(const ScalarFunction& f, const Tensor& point,
                         const GradCheckOptions& options = {});

}  // namespace satcn::nn
