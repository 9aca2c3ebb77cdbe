// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "satcn/dsp.hpp"
#include "satcn/model.hpp"

namespace satcn::train {

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch = 16;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; disabled when unset.
  std::optional<double> clip_norm;
  /// Stop after this many optimizer steps (0 = run every epoch).
  std::size_t max_steps = 0;

  void validate() const;
};

/// First/second moments aligned with the store's parameter order.
struct AdamState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bias-corrected Adam update of every trainable parameter, then zero_grad.
/// Throws NonFiniteGradient (store untouched) if any gradient is NaN/inf.
void adam_step(ParamStore& store, AdamState& state, const TrainConfig& config);

/// L2 norm over every trainable gradient.
double gradient_norm(const ParamStore& store);

struct Utterance {
  dsp::Waveform noisy;
  dsp::Waveform clean;
};

/// Utterances zero-padded to the longest one.
struct PaddedBatch {
  std::vector<dsp::Waveform> noisy;
  std::vector<dsp::Waveform> clean;
  std::vector<std::size_t> lengths;
  std::size_t padded_length = 0;

  /// frame_mask()[i][t] is true when frame t of item i holds signal rather
  /// than padding, for the given STFT geometry.
  std::vector<std::vector<bool>> frame_mask(std::size_t fft_size, std::size_t hop) const;
};

PaddedBatch pad_batch(std::span<const Utterance> utterances);

/// Magnitudes of a padded batch restricted to each item's valid frames.
struct BatchSpectra {
  std::vector<Tensor> noisy;
  std::vector<Tensor> clean;
};
BatchSpectra batch_spectra(const PaddedBatch& batch, const dsp::AnalysisWindow& window);

/// Loss of a padded batch: per-item masked means, averaged over items.
StageLosses batch_loss(const MultiStageModel& model, const PaddedBatch& batch);

struct StepRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // 1-based, global
  StageLosses losses;
};

struct EpochRecord {
  std::size_t epoch = 0;
  StageLosses mean;
};

struct TrainingLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_total = 0.0;
};

/// `epoch<TAB>step<TAB>L1 ... LK<TAB>total` per step.
void write_log(std::ostream& out, const TrainingLog& log);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitOptions {
  /// Receives the best-epoch model whenever the epoch mean total improves.
  std::optional<std::filesystem::path> best_checkpoint;
  /// Streams step lines as they are produced.
  std::ostream* log_stream = nullptr;
};

/// Seeded Fisher-Yates shuffle per epoch, mini-batches of config.batch (last
/// batch may be short), one Adam step per batch.
TrainingLog fit(MultiStageModel& model, std::span<const Utterance> data, const TrainConfig& config,
                const FitOptions& options = {});
TrainingLog fit(MultiStageModel& model, AdamState& state, std::span<const Utterance> data,
                const TrainConfig& config, const FitOptions& options = {});

// Checkpoint file: little-endian, magic "SATCN001", nine int64 config fields
// (K, H, B, R, L, P, N, hop, seed), uint32 tensor count, then per tensor:
// uint32 name length, name bytes, uint32 rank, rank x uint64 extents, float32
// data. Optimizer moments, when present, are stored as "adam/first/<name>",
// "adam/second/<name>" and a one-element "adam/step".

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

void save_checkpoint(const MultiStageModel& model, const AdamState* state,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  MultiStageModel model;
  std::optional<AdamState> state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace satcn::train
