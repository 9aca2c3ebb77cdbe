// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "satcn/blocks.hpp"
#include "satcn/dsp.hpp"

namespace satcn {

struct ModelConfig {
  std::size_t stages = 5;       // K
  std::size_t hidden = 256;     // H
  std::size_t bottleneck = 128; // B
  std::size_t stacks = 3;       // R
  std::size_t blocks = 8;       // L
  std::size_t kernel = 3;       // P
  std::size_t fft_size = 512;   // N
  std::size_t hop = 256;
  std::uint64_t seed = 0;

  std::size_t bins() const { return dsp::bin_count(fft_size); }
  std::size_t fusion_count() const { return stages > 2 ? stages - 2 : 0; }
  /// Throws std::invalid_argument describing the first bad field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// K stages plus fusion blocks in front of stages 3..K, all parameters owned by
/// one ParamStore. Movable, not copyable.
class MultiStageModel {
 public:
  explicit MultiStageModel(const ModelConfig& config);
  MultiStageModel(MultiStageModel&&) = default;
  MultiStageModel& operator=(MultiStageModel&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  std::vector<Stage>& stages() { return stages_; }
  const std::vector<Stage>& stages() const { return stages_; }
  /// fusions()[i] feeds stage i + 3 (one-based).
  std::vector<FusionBlock>& fusions() { return fusions_; }
  const std::vector<FusionBlock>& fusions() const { return fusions_; }

 private:
  ModelConfig config_;
  ParamStore store_;
  std::vector<Stage> stages_;
  std::vector<FusionBlock> fusions_;
};

MultiStageModel build_model(const ModelConfig& config);

/// Per-item record of one forward pass. estimates[k] = masks[k] ⊙ estimates[k-1]
/// with the input magnitude standing in for estimates[-1]. fused[i] is the
/// input of stage i + 3.
struct ForwardTrace {
  std::vector<Tensor> masks;
  std::vector<Tensor> estimates;
  std::vector<Tensor> fused;
};

struct ForwardOptions {
  /// Test hook: replace every stage mask by ones.
  bool unit_masks = false;
};

/// Eval-mode forward; a pure function of parameters and input.
ForwardTrace forward(const MultiStageModel& model, const Tensor& magnitude,
                     const ForwardOptions& options = {});
/// Train mode uses batch statistics and updates running estimates.
ForwardTrace forward(MultiStageModel& model, const Tensor& magnitude, Mode mode,
                     const ForwardOptions& options = {});
/// Batched eval-mode forward; items may differ in frame count.
std::vector<ForwardTrace> forward_batch(const MultiStageModel& model,
                                        std::span<const Tensor> magnitudes,
                                        const ForwardOptions& options = {});

struct StageLosses {
  std::vector<double> per_stage;
  double total = 0.0;
};

/// L(k) = mean |masks[k] ⊙ X̂(k-1) - S|, total = sum over k.
StageLosses total_loss(const ForwardTrace& trace, const Tensor& clean);

/// Train-mode forward over a batch, per-stage losses averaged over items, and
/// a backward pass accumulating into every parameter gradient. Items may have
/// different frame counts.
StageLosses accumulate_gradients(MultiStageModel& model, std::span<const Tensor> noisy,
                                 std::span<const Tensor> clean);

/// Batched loss without gradients (eval mode).
StageLosses evaluate_loss(const MultiStageModel& model, std::span<const Tensor> noisy,
                          std::span<const Tensor> clean);

dsp::AnalysisWindow analysis_window(const ModelConfig& config);

/// STFT, forward, ISTFT of the final estimate with the noisy phase; output has
/// the input's length and sample rate. Partially covered edge samples fade
/// toward the noisy input (see dsp::istft).
dsp::Waveform enhance(const MultiStageModel& model, const dsp::Waveform& noisy,
                      const ForwardOptions& options = {});

struct ParameterBreakdown {
  std::size_t self_attention = 0;  // one SA block
  std::size_t tcn_blocks = 0;      // all R * L TCN blocks of one stage
  std::size_t stage_glue = 0;      // bottleneck + projection of one stage
  std::size_t stage = 0;           // one full stage
  std::size_t fusion = 0;          // one fusion block
  std::size_t stages = 0;
  std::size_t fusions = 0;
  std::size_t total = 0;
};

/// Exact trainable counts; buffers are excluded.
ParameterBreakdown count_parameters(const MultiStageModel& model);

}  // namespace satcn
