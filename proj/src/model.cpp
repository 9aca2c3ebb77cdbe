// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "satcn/model.hpp"

#include <initializer_list>
#include <utility>
#include <stdexcept>
#include <string>

namespace satcn {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (stages < 1) fail("stages (K) must be >= 1");
  if (hidden < 1) fail("hidden (H) must be >= 1");
  if (bottleneck < 1) fail("bottleneck (B) must be >= 1");
  if (stacks < 1) fail("stacks (R) must be >= 1");
  if (blocks < 1 || blocks > 30) fail("blocks (L) must be in [1, 30]");
  if (kernel < 1 || kernel % 2 == 0) fail("kernel (P) must be odd, got " + std::to_string(kernel));
  if (fft_size < 2 || fft_size % 2 != 0) fail("fft_size (N) must be even and >= 2");
  if (hop < 1 || hop > fft_size) fail("hop must be in [1, fft_size]");
}

MultiStageModel::MultiStageModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  ParamFactory factory(store_, rng);
  const StageShape shape{config_.bins(), config_.bottleneck, config_.hidden,
                         config_.stacks, config_.blocks,     config_.kernel};
  for (std::size_t k = 1; k <= config_.stages; ++k) {
    if (k >= 3) fusions_.push_back(FusionBlock::create(factory, "fusion" + std::to_string(k), shape.bins));
    stages_.push_back(Stage::create(factory, "stage" + std::to_string(k), shape));
  }
}

MultiStageModel build_model(const ModelConfig& config) { return MultiStageModel(config); }

namespace {

struct BatchCache {
  std::vector<Stage::Cache> stages;
  std::vector<std::vector<FusionBlock::Cache>> fusions;
};

void check_inputs(const MultiStageModel& model, std::span<const Tensor> xs) {
  if (xs.empty()) throw std::invalid_argument("forward: empty batch");
  const std::size_t bins = model.config().bins();
  for (const Tensor& x : xs) {
    if (x.rank() != 2 || x.rows() != bins || x.cols() == 0) {
      throw std::invalid_argument("forward: expected " + std::to_string(bins) + " x T magnitude, got " +
                                  shape_string(x.shape()));
    }
  }
}

/// The stage cascade. `run_stage(k, inputs, cache)` produces stage k's masks.
template <typename RunStage>
std::vector<ForwardTrace> cascade(const MultiStageModel& model, std::span<const Tensor> xs,
                                  const ForwardOptions& options, RunStage&& run_stage,
                                  BatchCache* cache) {
  check_inputs(model, xs);
  const std::size_t n = xs.size();
  const std::size_t stages = model.stages().size();
  std::vector<ForwardTrace> traces(n);
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  std::vector<Tensor> previous(xs.begin(), xs.end());
  if (cache) {
    cache->stages.assign(stages, {});
    cache->fusions.assign(model.fusions().size(), std::vector<FusionBlock::Cache>(n));
  }
  for (std::size_t k = 0; k < stages; ++k) {
    if (k == 1) {
      inputs = previous;
    } else if (k >= 2) {
      const FusionBlock& fusion = model.fusions()[k - 2];
      for (std::size_t i = 0; i < n; ++i) {
        Tensor masked = hadamard(traces[i].masks[k - 1], xs[i]);
        inputs[i] = fusion.forward(masked, previous[i], cache ? &cache->fusions[k - 2][i] : nullptr);
        traces[i].fused.push_back(inputs[i]);
      }
    }
    std::vector<Tensor> masks = run_stage(k, inputs, cache ? &cache->stages[k] : nullptr);
    for (std::size_t i = 0; i < n; ++i) {
      if (options.unit_masks) masks[i].fill(1.0);
      previous[i] = hadamard(masks[i], previous[i]);
      traces[i].masks.push_back(std::move(masks[i]));
      traces[i].estimates.push_back(previous[i]);
    }
  }
  return traces;
}

std::vector<ForwardTrace> forward_train(MultiStageModel& model, std::span<const Tensor> xs,
                                        const ForwardOptions& options, BatchCache* cache) {
  auto run = [&model](std::size_t k, const std::vector<Tensor>& in, Stage::Cache* c) {
    return model.stages()[k].forward(in, Mode::train, c);
  };
  return cascade(model, xs, options, run, cache);
}

StageLosses average_losses(const std::vector<ForwardTrace>& traces, std::span<const Tensor> clean) {
  if (traces.size() != clean.size()) throw std::invalid_argument("loss: batch size mismatch");
  StageLosses out;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const StageLosses item = total_loss(traces[i], clean[i]);
    if (out.per_stage.empty()) out.per_stage.assign(item.per_stage.size(), 0.0);
    for (std::size_t k = 0; k < item.per_stage.size(); ++k) out.per_stage[k] += item.per_stage[k];
  }
  const double inv = 1.0 / static_cast<double>(traces.size());
  for (double& l : out.per_stage) {
    l *= inv;
    out.total += l;
  }
  return out;
}

}  // namespace

ForwardTrace forward(const MultiStageModel& model, const Tensor& magnitude, const ForwardOptions& options) {
  return std::move(forward_batch(model, std::span(&magnitude, 1), options).front());
}

ForwardTrace forward(MultiStageModel& model, const Tensor& magnitude, Mode mode,
                     const ForwardOptions& options) {
  if (mode == Mode::eval) return forward(std::as_const(model), magnitude, options);
  return std::move(forward_train(model, std::span(&magnitude, 1), options, nullptr).front());
}

std::vector<ForwardTrace> forward_batch(const MultiStageModel& model, std::span<const Tensor> magnitudes,
                                        const ForwardOptions& options) {
  auto run = [&model](std::size_t k, const std::vector<Tensor>& in, Stage::Cache*) {
    return model.stages()[k].forward(in);
  };
  return cascade(model, magnitudes, options, run, nullptr);
}

StageLosses total_loss(const ForwardTrace& trace, const Tensor& clean) {
  StageLosses out;
  for (const Tensor& est : trace.estimates) {
    out.per_stage.push_back(nn::mean_abs_loss(est, clean));
    out.total += out.per_stage.back();
  }
  return out;
}

StageLosses accumulate_gradients(MultiStageModel& model, std::span<const Tensor> noisy,
                                 std::span<const Tensor> clean) {
  if (noisy.size() != clean.size()) throw std::invalid_argument("accumulate_gradients: batch size mismatch");
  for (std::size_t i = 0; i < noisy.size(); ++i) require_same_shape(noisy[i], clean[i], "noisy/clean");

  BatchCache cache;
  const std::vector<ForwardTrace> traces = forward_train(model, noisy, {}, &cache);
  const StageLosses losses = average_losses(traces, clean);

  const std::size_t n = noisy.size();
  const std::size_t stages = model.stages().size();
  const double scale = 1.0 / static_cast<double>(n);
  // d_est[k][i]: gradient w.r.t. estimate k of item i; d_mask_extra[k][i]:
  // gradient reaching mask k through the next fusion's masked-original input.
  std::vector<std::vector<Tensor>> d_est(stages, std::vector<Tensor>(n));
  std::vector<std::vector<Tensor>> d_mask_extra(stages);
  for (std::size_t k = 0; k < stages; ++k)
    for (std::size_t i = 0; i < n; ++i)
      d_est[k][i] = nn::mean_abs_loss_backward(traces[i].estimates[k], clean[i], scale);

  for (std::size_t k = stages; k-- > 0;) {
    std::vector<Tensor> d_mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor& prev = k == 0 ? noisy[i] : traces[i].estimates[k - 1];
      d_mask[i] = hadamard(d_est[k][i], prev);
      if (!d_mask_extra[k].empty()) d_mask[i] += d_mask_extra[k][i];
      if (k > 0) d_est[k - 1][i] += hadamard(d_est[k][i], traces[i].masks[k]);
    }
    std::vector<Tensor> d_input = model.stages()[k].backward(cache.stages[k], d_mask);
    if (k == 1) {
      for (std::size_t i = 0; i < n; ++i) d_est[0][i] += d_input[i];
    } else if (k >= 2) {
      const FusionBlock& fusion = model.fusions()[k - 2];
      d_mask_extra[k - 1].resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto [d_masked, d_prev] = fusion.backward(cache.fusions[k - 2][i], d_input[i]);
        d_mask_extra[k - 1][i] = hadamard(d_masked, noisy[i]);
        d_est[k - 1][i] += d_prev;
      }
    }
  }
  return losses;
}

StageLosses evaluate_loss(const MultiStageModel& model, std::span<const Tensor> noisy,
                          std::span<const Tensor> clean) {
  return average_losses(forward_batch(model, noisy), clean);
}

dsp::AnalysisWindow analysis_window(const ModelConfig& config) {
  return dsp::hann_window(config.fft_size, config.hop);
}

dsp::Waveform enhance(const MultiStageModel& model, const dsp::Waveform& noisy,
                      const ForwardOptions& options) {
  const dsp::AnalysisWindow window = analysis_window(model.config());
  auto [mag, phase] = dsp::stft(noisy, window);
  ForwardTrace trace = forward(model, mag.values, options);
  mag.values = std::move(trace.estimates.back());
  return dsp::istft(mag, phase, window, noisy.size(), noisy.sample_rate, noisy.samples);
}

namespace {

std::size_t count(std::initializer_list<const Parameter*> params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

std::size_t count(const Conv1x1& c) { return count({c.weight, c.bias}); }

std::size_t count(const FusionBlock::Branch& b) {
  return count(b.conv) + count({b.slope, b.norm.gamma, b.norm.beta});
}

}  // namespace

ParameterBreakdown count_parameters(const MultiStageModel& model) {
  ParameterBreakdown out;
  out.stages = model.stages().size();
  out.fusions = model.fusions().size();
  const Stage& s = model.stages().front();
  out.self_attention = count(s.attention.query) + count(s.attention.key) + count(s.attention.value) +
                       count({s.attention.delta});
  for (const TcnBlock& b : s.blocks) {
    out.tcn_blocks += count(b.in_conv) + count(b.out_conv) +
                      count({b.prelu1, b.prelu2, b.bn1.gamma, b.bn1.beta, b.bn2.gamma, b.bn2.beta,
                             b.dconv_kernel, b.dconv_bias});
  }
  out.stage_glue = count(s.bottleneck) + count(s.projection);
  out.stage = out.self_attention + out.tcn_blocks + out.stage_glue;
  if (!model.fusions().empty()) {
    const FusionBlock& f = model.fusions().front();
    out.fusion = count(f.masked) + count(f.previous) + count(f.merged) + count(f.out_conv) +
                 count({f.out_slope});
  }
  out.total = model.store().trainable_count();
  return out;
}

}  // namespace satcn
