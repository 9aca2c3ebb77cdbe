// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "satcn/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace satcn {

Parameter* ParamFactory::uniform(const std::string& name, Tensor::Shape shape, std::size_t fan_in) {
  Tensor t(std::move(shape));
  const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = nn::storage_precision(rng_.uniform(-a, a));
  return &store_.add(name, std::move(t));
}

Parameter* ParamFactory::constant(const std::string& name, Tensor::Shape shape, double value) {
  return &store_.add(name, Tensor(std::move(shape), value));
}

Parameter* ParamFactory::buffer(const std::string& name, Tensor::Shape shape, double value) {
  return &store_.add(name, Tensor(std::move(shape), value), /*trainable=*/false);
}

Conv1x1 Conv1x1::create(ParamFactory& f, const std::string& name, std::size_t in, std::size_t out) {
  Conv1x1 c;
  c.weight = f.uniform(name + ".weight", {out, in}, in);
  c.bias = f.constant(name + ".bias", {out}, 0.0);
  return c;
}

Tensor Conv1x1::forward(const Tensor& x) const {
  return nn::pointwise_conv(x, weight->value, bias->value);
}

Tensor Conv1x1::backward(const Tensor& x, const Tensor& dy) const {
  return nn::pointwise_conv_backward(x, weight->value, dy, weight->grad, bias->grad);
}

BatchNorm BatchNorm::create(ParamFactory& f, const std::string& name, std::size_t channels) {
  BatchNorm bn;
  bn.gamma = f.constant(name + ".gamma", {channels}, 1.0);
  bn.beta = f.constant(name + ".beta", {channels}, 0.0);
  bn.running_mean = f.buffer(name + ".running_mean", {channels}, 0.0);
  bn.running_var = f.buffer(name + ".running_var", {channels}, 1.0);
  return bn;
}

GlobalNorm GlobalNorm::create(ParamFactory& f, const std::string& name, std::size_t channels) {
  GlobalNorm g;
  g.gamma = f.constant(name + ".gamma", {channels}, 1.0);
  g.beta = f.constant(name + ".beta", {channels}, 0.0);
  return g;
}

// ---------------------------------------------------------------------------
// Self-attention

SelfAttentionBlock SelfAttentionBlock::create(ParamFactory& f, const std::string& name,
                                              std::size_t bins) {
  SelfAttentionBlock sa;
  sa.query = Conv1x1::create(f, name + ".query", bins, bins);
  sa.key = Conv1x1::create(f, name + ".key", bins, bins);
  sa.value = Conv1x1::create(f, name + ".value", bins, bins);
  sa.delta = f.constant(name + ".delta", {1}, 0.0);
  return sa;
}

Tensor SelfAttentionBlock::forward(const Tensor& x, Cache* cache) const {
  Tensor q = query.forward(x);
  Tensor k = key.forward(x);
  Tensor v = value.forward(x);
  Tensor scores = nn::matmul_transposed(q, k);  // F x F
  scores *= 1.0 / std::sqrt(static_cast<double>(x.rows()));
  Tensor weights = nn::softmax_columns(scores);
  Tensor attended = nn::matmul(weights, v);
  Tensor y = attended;
  y *= delta->value[0];
  y += x;
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->weights = std::move(weights);
    cache->attended = std::move(attended);
  }
  return y;
}

Tensor SelfAttentionBlock::backward(const Cache& c, const Tensor& dy) const {
  double ddelta = 0.0;
  for (std::size_t i = 0; i < dy.size(); ++i) ddelta += dy[i] * c.attended[i];
  delta->grad[0] += ddelta;

  Tensor dattended = dy;
  dattended *= delta->value[0];
  Tensor dweights, dv;
  nn::matmul_backward(c.weights, c.v, dattended, dweights, dv);
  Tensor dscores = nn::softmax_columns_backward(c.weights, dweights);
  dscores *= 1.0 / std::sqrt(static_cast<double>(c.x.rows()));
  // scores = q k^T: dq = dscores k, dk = dscores^T q
  Tensor dq = nn::matmul(dscores, c.k);
  Tensor dk = nn::transposed_matmul(dscores, c.q);

  Tensor dx = dy;
  dx += query.backward(c.x, dq);
  dx += key.backward(c.x, dk);
  dx += value.backward(c.x, dv);
  return dx;
}

// ---------------------------------------------------------------------------
// TCN block

TcnBlock TcnBlock::create(ParamFactory& f, const std::string& name, std::size_t channels,
                          std::size_t hidden, std::size_t kernel, std::size_t dilation) {
  if (kernel % 2 == 0) throw std::invalid_argument("TCN kernel size must be odd");
  TcnBlock b;
  b.dilation_ = dilation;
  b.in_conv = Conv1x1::create(f, name + ".in_conv", channels, hidden);
  b.prelu1 = f.constant(name + ".prelu1", {hidden}, 0.25);
  b.bn1 = BatchNorm::create(f, name + ".bn1", hidden);
  b.dconv_kernel = f.uniform(name + ".dconv.weight", {hidden, kernel}, kernel);
  b.dconv_bias = f.constant(name + ".dconv.bias", {hidden}, 0.0);
  b.prelu2 = f.constant(name + ".prelu2", {hidden}, 0.25);
  b.bn2 = BatchNorm::create(f, name + ".bn2", hidden);
  b.out_conv = Conv1x1::create(f, name + ".out_conv", hidden, channels);
  return b;
}

namespace {

// Shared body of the train/eval forwards; `norm` applies one batch norm.
template <typename NormFn>
std::vector<Tensor> tcn_forward(const TcnBlock& b, std::span<const Tensor> xs, NormFn&& norm,
                                TcnBlock::Cache* cache) {
  std::vector<Tensor> expanded, act;
  expanded.reserve(xs.size());
  act.reserve(xs.size());
  for (const Tensor& x : xs) {
    expanded.push_back(b.in_conv.forward(x));
    act.push_back(nn::prelu(expanded.back(), b.prelu1->value));
  }
  std::vector<Tensor> norm1 = norm(b.bn1, act, cache ? &cache->bn1 : nullptr);

  std::vector<Tensor> conv;
  conv.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    conv.push_back(nn::depthwise_dconv(norm1[i], b.dconv_kernel->value, b.dconv_bias->value,
                                       b.dilation()));
    act[i] = nn::prelu(conv.back(), b.prelu2->value);
  }
  std::vector<Tensor> norm2 = norm(b.bn2, act, cache ? &cache->bn2 : nullptr);

  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.push_back(b.out_conv.forward(norm2[i]));
    out.back() += xs[i];
  }
  if (cache) {
    cache->input.assign(xs.begin(), xs.end());
    cache->expanded = std::move(expanded);
    cache->norm1 = std::move(norm1);
    cache->conv = std::move(conv);
    cache->norm2 = std::move(norm2);
  }
  return out;
}

}  // namespace

std::vector<Tensor> TcnBlock::forward(std::span<const Tensor> xs, Mode mode, Cache* cache) {
  auto norm = [mode](const BatchNorm& bn, const std::vector<Tensor>& in, nn::BatchNormCache* c) {
    return nn::batch_norm(in, bn.gamma->value, bn.beta->value, bn.running_mean->value,
                          bn.running_var->value, mode, c);
  };
  return tcn_forward(*this, xs, norm, cache);
}

std::vector<Tensor> TcnBlock::forward(std::span<const Tensor> xs) const {
  auto norm = [](const BatchNorm& bn, const std::vector<Tensor>& in, nn::BatchNormCache*) {
    return nn::batch_norm(in, bn.gamma->value, bn.beta->value, bn.running_mean->value,
                          bn.running_var->value);
  };
  return tcn_forward(*this, xs, norm, nullptr);
}

std::vector<Tensor> TcnBlock::backward(const Cache& c, std::span<const Tensor> dys) const {
  const std::size_t n = dys.size();
  std::vector<Tensor> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = out_conv.backward(c.norm2[i], dys[i]);
  d = nn::batch_norm_backward(c.bn2, bn2.gamma->value, d, bn2.gamma->grad, bn2.beta->grad);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor dconv = nn::prelu_backward(c.conv[i], prelu2->value, d[i], prelu2->grad);
    d[i] = nn::depthwise_dconv_backward(c.norm1[i], dconv_kernel->value, dilation_, dconv,
                                        dconv_kernel->grad, dconv_bias->grad);
  }
  d = nn::batch_norm_backward(c.bn1, bn1.gamma->value, d, bn1.gamma->grad, bn1.beta->grad);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor dexp = nn::prelu_backward(c.expanded[i], prelu1->value, d[i], prelu1->grad);
    d[i] = in_conv.backward(c.input[i], dexp);
    d[i] += dys[i];
  }
  return d;
}

std::size_t receptive_field(std::size_t kernel, std::size_t blocks) {
  if (kernel < 1 || blocks < 1) throw std::invalid_argument("receptive_field: P and L must be >= 1");
  return 1 + (kernel - 1) * ((std::size_t{1} << blocks) - 1);
}

// ---------------------------------------------------------------------------
// Stage

Stage Stage::create(ParamFactory& f, const std::string& name, const StageShape& s) {
  if (s.stacks < 1 || s.blocks < 1) throw std::invalid_argument("stage needs R >= 1 and L >= 1");
  Stage st;
  st.attention = SelfAttentionBlock::create(f, name + ".sa", s.bins);
  st.bottleneck = Conv1x1::create(f, name + ".bottleneck", s.bins, s.bottleneck);
  for (std::size_t r = 0; r < s.stacks; ++r) {
    for (std::size_t l = 0; l < s.blocks; ++l) {
      const std::string block = name + ".tcn" + std::to_string(r + 1) + "." + std::to_string(l + 1);
      st.blocks.push_back(
          TcnBlock::create(f, block, s.bottleneck, s.hidden, s.kernel, block_dilation(l)));
    }
  }
  st.projection = Conv1x1::create(f, name + ".projection", s.bottleneck, s.bins);
  return st;
}

std::vector<Tensor> Stage::forward(std::span<const Tensor> xs, Mode mode, Cache* cache) {
  const std::size_t n = xs.size();
  std::vector<Tensor> attended(n), h(n);
  if (cache) cache->attention.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    attended[i] = attention.forward(xs[i], cache ? &cache->attention[i] : nullptr);
    h[i] = bottleneck.forward(attended[i]);
  }
  if (cache) cache->blocks.assign(blocks.size(), {});
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    h = blocks[b].forward(h, mode, cache ? &cache->blocks[b] : nullptr);
  }
  std::vector<Tensor> masks(n);
  for (std::size_t i = 0; i < n; ++i) masks[i] = nn::sigmoid(projection.forward(h[i]));
  if (cache) {
    cache->attended = std::move(attended);
    cache->tcn_out = std::move(h);
    cache->masks = masks;
  }
  return masks;
}

std::vector<Tensor> Stage::forward(std::span<const Tensor> xs) const {
  std::vector<Tensor> h;
  h.reserve(xs.size());
  for (const Tensor& x : xs) h.push_back(bottleneck.forward(attention.forward(x)));
  for (const TcnBlock& b : blocks) h = b.forward(h);
  std::vector<Tensor> masks;
  masks.reserve(xs.size());
  for (const Tensor& t : h) masks.push_back(nn::sigmoid(projection.forward(t)));
  return masks;
}

std::vector<Tensor> Stage::backward(const Cache& c, std::span<const Tensor> dmasks) const {
  const std::size_t n = dmasks.size();
  std::vector<Tensor> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = projection.backward(c.tcn_out[i], nn::sigmoid_backward(c.masks[i], dmasks[i]));
  }
  for (std::size_t b = blocks.size(); b-- > 0;) d = blocks[b].backward(c.blocks[b], d);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = attention.backward(c.attention[i], bottleneck.backward(c.attended[i], d[i]));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Fusion

namespace {

FusionBlock::Branch make_branch(ParamFactory& f, const std::string& name, std::size_t bins) {
  FusionBlock::Branch b;
  b.conv = Conv1x1::create(f, name + ".conv", bins, bins);
  b.slope = f.constant(name + ".prelu", {bins}, 0.25);
  b.norm = GlobalNorm::create(f, name + ".gln", bins);
  return b;
}

Tensor branch_forward(const FusionBlock::Branch& b, const Tensor& x, FusionBlock::BranchCache* cache) {
  Tensor conv = b.conv.forward(x);
  Tensor act = nn::prelu(conv, b.slope->value);
  Tensor out = nn::global_layer_norm(act, b.norm.gamma->value, b.norm.beta->value, nn::kGlobalNormEps,
                                     cache ? &cache->norm : nullptr);
  if (cache) {
    cache->input = x;
    cache->conv = std::move(conv);
  }
  return out;
}

Tensor branch_backward(const FusionBlock::Branch& b, const FusionBlock::BranchCache& c,
                       const Tensor& dy) {
  Tensor dact = nn::global_layer_norm_backward(c.norm, b.norm.gamma->value, dy, b.norm.gamma->grad,
                                               b.norm.beta->grad);
  Tensor dconv = nn::prelu_backward(c.conv, b.slope->value, dact, b.slope->grad);
  return b.conv.backward(c.input, dconv);
}

}  // namespace

FusionBlock FusionBlock::create(ParamFactory& f, const std::string& name, std::size_t bins) {
  FusionBlock fb;
  fb.masked = make_branch(f, name + ".masked", bins);
  fb.previous = make_branch(f, name + ".previous", bins);
  fb.merged = make_branch(f, name + ".merged", bins);
  fb.out_conv = Conv1x1::create(f, name + ".out_conv", bins, bins);
  fb.out_slope = f.constant(name + ".out_prelu", {bins}, 0.25);
  return fb;
}

Tensor FusionBlock::forward(const Tensor& masked_original, const Tensor& previous_estimate,
                            Cache* cache) const {
  require_same_shape(masked_original, previous_estimate, "fusion inputs");
  Tensor sum = branch_forward(masked, masked_original, cache ? &cache->masked : nullptr);
  sum += branch_forward(previous, previous_estimate, cache ? &cache->previous : nullptr);
  Tensor merged_out = branch_forward(merged, sum, cache ? &cache->merged : nullptr);
  Tensor last_conv = out_conv.forward(merged_out);
  Tensor y = nn::prelu(last_conv, out_slope->value);
  if (cache) {
    cache->merged_out = std::move(merged_out);
    cache->last_conv = std::move(last_conv);
  }
  return y;
}

std::pair<Tensor, Tensor> FusionBlock::backward(const Cache& c, const Tensor& dy) const {
  Tensor dlast = nn::prelu_backward(c.last_conv, out_slope->value, dy, out_slope->grad);
  Tensor dsum = branch_backward(merged, c.merged, out_conv.backward(c.merged_out, dlast));
  return {branch_backward(masked, c.masked, dsum), branch_backward(previous, c.previous, dsum)};
}

}  // namespace satcn
