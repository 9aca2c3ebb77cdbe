// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Scalar-loop reimplementations of the network blocks on nested vectors.
// They share nothing with the library beyond reading parameter values.

#pragma once

#include <cmath>
#include <vector>

#include "satcn/blocks.hpp"
#include "satcn/model.hpp"

namespace satcn::oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

inline double max_diff(const Mat& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < a[r].size(); ++c) worst = std::max(worst, std::abs(a[r][c] - b(r, c)));
  return worst;
}

inline Mat conv(const Conv1x1& layer, const Mat& x) {
  const Tensor& w = layer.weight->value;
  const Tensor& b = layer.bias->value;
  Mat y(w.rows(), std::vector<double>(x[0].size()));
  for (std::size_t c = 0; c < w.rows(); ++c)
    for (std::size_t t = 0; t < x[0].size(); ++t) {
      double s = b[c];
      for (std::size_t i = 0; i < x.size(); ++i) s += w(c, i) * x[i][t];
      y[c][t] = s;
    }
  return y;
}

inline Mat prelu(const Parameter* slope, Mat x) {
  for (std::size_t c = 0; c < x.size(); ++c)
    for (double& v : x[c])
      if (v < 0) v *= slope->value[c];
  return x;
}

// Eval mode: running statistics. Train mode: statistics over this single item.
inline Mat batch_norm(const BatchNorm& bn, Mat x, bool train) {
  for (std::size_t c = 0; c < x.size(); ++c) {
    double mean = bn.running_mean->value[c], var = bn.running_var->value[c];
    if (train) {
      mean = 0.0;
      for (double v : x[c]) mean += v;
      mean /= double(x[c].size());
      var = 0.0;
      for (double v : x[c]) var += (v - mean) * (v - mean);
      var /= double(x[c].size());
    }
    for (double& v : x[c]) v = (v - mean) / std::sqrt(var + 1e-5) * bn.gamma->value[c] + bn.beta->value[c];
  }
  return x;
}

inline Mat global_norm(const GlobalNorm& g, Mat x) {
  double mean = 0.0, n = 0.0;
  for (const auto& row : x)
    for (double v : row) mean += v, n += 1.0;
  mean /= n;
  double var = 0.0;
  for (const auto& row : x)
    for (double v : row) var += (v - mean) * (v - mean);
  var /= n;
  for (std::size_t f = 0; f < x.size(); ++f)
    for (double& v : x[f]) v = (v - mean) / std::sqrt(var + 1e-8) * g.gamma->value[f] + g.beta->value[f];
  return x;
}

inline Mat dconv(const Tensor& kernel, const Tensor& bias, std::size_t d, const Mat& x) {
  const long p = long(kernel.cols()), half = (p - 1) / 2, len = long(x[0].size());
  Mat y(x.size(), std::vector<double>(x[0].size()));
  for (std::size_t c = 0; c < x.size(); ++c)
    for (long t = 0; t < len; ++t) {
      double s = bias[c];
      for (long k = 0; k < p; ++k) {
        const long src = t + (k - half) * long(d);
        if (src >= 0 && src < len) s += kernel(c, std::size_t(k)) * x[c][std::size_t(src)];
      }
      y[c][std::size_t(t)] = s;
    }
  return y;
}

inline Mat softmax_columns(Mat w) {
  for (std::size_t j = 0; j < w[0].size(); ++j) {
    double top = w[0][j];
    for (std::size_t i = 0; i < w.size(); ++i) top = std::max(top, w[i][j]);
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) z += std::exp(w[i][j] - top);
    for (std::size_t i = 0; i < w.size(); ++i) w[i][j] = std::exp(w[i][j] - top) / z;
  }
  return w;
}

inline Mat attention(const SelfAttentionBlock& sa, const Mat& x) {
  const Mat q = conv(sa.query, x), k = conv(sa.key, x), v = conv(sa.value, x);
  const std::size_t f = x.size(), t = x[0].size();
  Mat w(f, std::vector<double>(f));
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      double s = 0.0;
      for (std::size_t u = 0; u < t; ++u) s += q[i][u] * k[j][u];
      w[i][j] = s / std::sqrt(double(f));
    }
  const Mat a = softmax_columns(w);
  Mat out = x;
  const double delta = sa.delta->value[0];
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t u = 0; u < t; ++u) {
      double s = 0.0;
      for (std::size_t j = 0; j < f; ++j) s += a[i][j] * v[j][u];
      out[i][u] += delta * s;
    }
  return out;
}

inline Mat tcn(const TcnBlock& b, const Mat& x, bool train) {
  Mat h = conv(b.in_conv, x);
  h = batch_norm(b.bn1, prelu(b.prelu1, h), train);
  h = dconv(b.dconv_kernel->value, b.dconv_bias->value, b.dilation(), h);
  h = batch_norm(b.bn2, prelu(b.prelu2, h), train);
  h = conv(b.out_conv, h);
  for (std::size_t c = 0; c < h.size(); ++c)
    for (std::size_t t = 0; t < h[c].size(); ++t) h[c][t] += x[c][t];
  return h;
}

inline Mat sigmoid(Mat x) {
  for (auto& row : x)
    for (double& v : row) v = 1.0 / (1.0 + std::exp(-v));
  return x;
}

inline Mat stage(const Stage& s, const Mat& x, bool train) {
  Mat h = conv(s.bottleneck, attention(s.attention, x));
  for (const TcnBlock& b : s.blocks) h = tcn(b, h, train);
  return sigmoid(conv(s.projection, h));
}

inline Mat fusion(const FusionBlock& fb, const Mat& masked, const Mat& previous) {
  auto branch = [](const FusionBlock::Branch& br, const Mat& x) {
    return global_norm(br.norm, prelu(br.slope, conv(br.conv, x)));
  };
  Mat sum = branch(fb.masked, masked);
  const Mat other = branch(fb.previous, previous);
  for (std::size_t f = 0; f < sum.size(); ++f)
    for (std::size_t t = 0; t < sum[f].size(); ++t) sum[f][t] += other[f][t];
  return prelu(fb.out_slope, conv(fb.out_conv, branch(fb.merged, sum)));
}

inline Mat hadamard(const Mat& a, const Mat& b) {
  Mat out = a;
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < a[r].size(); ++c) out[r][c] *= b[r][c];
  return out;
}

struct Trace {
  std::vector<Mat> masks, estimates;
};

/// Eval-mode cascade of a whole model.
inline Trace model(const MultiStageModel& m, const Mat& x) {
  Trace tr;
  Mat input = x, previous = x;
  for (std::size_t k = 0; k < m.stages().size(); ++k) {
    if (k >= 2) input = fusion(m.fusions()[k - 2], hadamard(tr.masks[k - 1], x), previous);
    const Mat mask = stage(m.stages()[k], input, false);
    previous = hadamard(mask, previous);
    tr.masks.push_back(mask);
    tr.estimates.push_back(previous);
    input = previous;
  }
  return tr;
}

}  // namespace satcn::oracle
