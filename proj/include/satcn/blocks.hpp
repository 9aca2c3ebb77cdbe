// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "satcn/nn.hpp"
#include "satcn/random.hpp"

namespace satcn {

using nn::Mode;
using nn::Parameter;
using nn::ParamStore;

/// Trainable parameter creation with the library's initialization rules:
/// conv weights ~ U(-a, a) with a = sqrt(1 / fan_in), biases 0.
class ParamFactory {
 public:
  ParamFactory(ParamStore& store, Rng& rng) : store_(store), rng_(rng) {}

  Parameter* uniform(const std::string& name, Tensor::Shape shape, std::size_t fan_in);
  Parameter* constant(const std::string& name, Tensor::Shape shape, double value);
  Parameter* buffer(const std::string& name, Tensor::Shape shape, double value);

 private:
  ParamStore& store_;
  Rng& rng_;
};

/// 1x1 convolution weights.
struct Conv1x1 {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Conv1x1 create(ParamFactory& f, const std::string& name, std::size_t in, std::size_t out);
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& dy) const;
};

struct BatchNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;

  static BatchNorm create(ParamFactory& f, const std::string& name, std::size_t channels);
};

struct GlobalNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static GlobalNorm create(ParamFactory& f, const std::string& name, std::size_t channels);
};

/// Self-attention over frequency: Q, K, V from 1x1 convs, attention weights
/// softmax_columns(Q K^T / sqrt(F)), output X + delta * (weights V).
class SelfAttentionBlock {
 public:
  struct Cache {
    Tensor x, q, k, v, weights, attended;
  };

  static SelfAttentionBlock create(ParamFactory& f, const std::string& name, std::size_t bins);

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& dy) const;

  Conv1x1 query, key, value;
  Parameter* delta = nullptr;
};

/// Residual block: 1x1 conv B->H, PReLU, BN, dilated depthwise conv, PReLU,
/// BN, 1x1 conv H->B, plus the skip connection.
class TcnBlock {
 public:
  struct Cache {
    std::vector<Tensor> input, expanded, norm1, conv, norm2;
    nn::BatchNormCache bn1, bn2;
  };

  static TcnBlock create(ParamFactory& f, const std::string& name, std::size_t channels,
                         std::size_t hidden, std::size_t kernel, std::size_t dilation);

  /// Train mode updates the batch-norm running statistics.
  std::vector<Tensor> forward(std::span<const Tensor> xs, Mode mode, Cache* cache);
  std::vector<Tensor> forward(std::span<const Tensor> xs) const;
  std::vector<Tensor> backward(const Cache& cache, std::span<const Tensor> dys) const;

  std::size_t dilation() const { return dilation_; }

  Conv1x1 in_conv;
  Parameter* prelu1 = nullptr;
  BatchNorm bn1;
  Parameter* dconv_kernel = nullptr;
  Parameter* dconv_bias = nullptr;
  Parameter* prelu2 = nullptr;
  BatchNorm bn2;
  Conv1x1 out_conv;

 private:
  std::size_t dilation_ = 1;
};

/// Dilation of the block at zero-based position `index` within its stack.
constexpr std::size_t block_dilation(std::size_t index) { return std::size_t{1} << index; }

/// 1 + (P - 1)(2^L - 1): frames spanned by one stack of L blocks.
std::size_t receptive_field(std::size_t kernel, std::size_t blocks);

struct StageShape {
  std::size_t bins = 0;        // F
  std::size_t bottleneck = 0;  // B
  std::size_t hidden = 0;      // H
  std::size_t stacks = 0;      // R
  std::size_t blocks = 0;      // L
  std::size_t kernel = 3;      // P
};

/// One enhancement stage: SA block, bottleneck, R stacks of L TCN blocks,
/// projection back to F channels and a sigmoid. Emits a mask.
class Stage {
 public:
  struct Cache {
    std::vector<SelfAttentionBlock::Cache> attention;
    std::vector<Tensor> attended;
    std::vector<Tensor> tcn_out;
    std::vector<TcnBlock::Cache> blocks;
    std::vector<Tensor> masks;
  };

  static Stage create(ParamFactory& f, const std::string& name, const StageShape& shape);

  std::vector<Tensor> forward(std::span<const Tensor> xs, Mode mode, Cache* cache);
  std::vector<Tensor> forward(std::span<const Tensor> xs) const;
  std::vector<Tensor> backward(const Cache& cache, std::span<const Tensor> dmasks) const;

  SelfAttentionBlock attention;
  Conv1x1 bottleneck;
  std::vector<TcnBlock> blocks;  // stack-major, R * L entries
  Conv1x1 projection;
};

/// Merges the masked original magnitude with the previous stage estimate.
/// Each input: 1x1 conv, PReLU, gLN. Sum, then 1x1 conv, PReLU, gLN, 1x1 conv,
/// PReLU. All widths F.
class FusionBlock {
 public:
  struct Branch {
    Conv1x1 conv;
    Parameter* slope = nullptr;
    GlobalNorm norm;
  };
  struct BranchCache {
    Tensor input, conv;
    nn::GlobalNormCache norm;
  };
  struct Cache {
    BranchCache masked, previous, merged;
    Tensor merged_out, last_conv;
  };

  static FusionBlock create(ParamFactory& f, const std::string& name, std::size_t bins);

  Tensor forward(const Tensor& masked_original, const Tensor& previous_estimate,
                 Cache* cache = nullptr) const;
  /// Returns gradients for (masked_original, previous_estimate).
  std::pair<Tensor, Tensor> backward(const Cache& cache, const Tensor& dy) const;

  Branch masked, previous, merged;
  Conv1x1 out_conv;
  Parameter* out_slope = nullptr;
};

}  // namespace satcn
