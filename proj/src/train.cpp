// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "satcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace satcn::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) fail("beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) fail("beta2 must be in (0, 1)");
  if (!(eps > 0.0)) fail("eps must be > 0");
  if (batch < 1) fail("batch must be >= 1");
  if (clip_norm && !(*clip_norm > 0.0)) fail("clip_norm must be > 0");
}

double gradient_norm(const ParamStore& store) {
  double sq = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store[i].trainable) continue;
    for (double g : store[i].grad.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

void adam_step(ParamStore& store, AdamState& state, const TrainConfig& config) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter& p = store[i];
    if (!p.trainable) continue;
    for (double g : p.grad.values()) {
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in parameter " + p.name);
    }
  }
  if (state.first.size() != store.size()) {
    state.first.assign(store.size(), {});
    state.second.assign(store.size(), {});
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (!store[i].trainable) continue;
      state.first[i] = Tensor(store[i].value.shape());
      state.second[i] = Tensor(store[i].value.shape());
    }
  }

  double clip_scale = 1.0;
  if (config.clip_norm) {
    const double norm = gradient_norm(store);
    if (norm > *config.clip_norm) clip_scale = *config.clip_norm / norm;
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(config.beta1, t);
  const double correct2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    if (!p.trainable) continue;
    Tensor& m = state.first[i];
    Tensor& v = state.second[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j] * clip_scale;
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
      const double mhat = m[j] / correct1;
      const double vhat = v[j] / correct2;
      p.value[j] = nn::storage_precision(p.value[j] - config.lr * mhat / (std::sqrt(vhat) + config.eps));
    }
  }
  store.zero_grad();
}

PaddedBatch pad_batch(std::span<const Utterance> utterances) {
  if (utterances.empty()) throw std::invalid_argument("pad_batch: empty utterance list");
  PaddedBatch batch;
  const int rate = utterances.front().noisy.sample_rate;
  for (const Utterance& u : utterances) {
    if (u.noisy.size() != u.clean.size()) {
      throw std::invalid_argument("pad_batch: noisy and clean lengths differ (" +
                                  std::to_string(u.noisy.size()) + " vs " + std::to_string(u.clean.size()) + ")");
    }
    if (u.noisy.sample_rate != rate || u.clean.sample_rate != rate) {
      throw std::invalid_argument("pad_batch: mixed sample rates");
    }
    batch.padded_length = std::max(batch.padded_length, u.noisy.size());
  }
  for (const Utterance& u : utterances) {
    batch.lengths.push_back(u.noisy.size());
    batch.noisy.push_back(u.noisy);
    batch.clean.push_back(u.clean);
    batch.noisy.back().samples.resize(batch.padded_length, 0.0);
    batch.clean.back().samples.resize(batch.padded_length, 0.0);
  }
  return batch;
}

std::vector<std::vector<bool>> PaddedBatch::frame_mask(std::size_t fft_size, std::size_t hop) const {
  const std::size_t total = dsp::frame_count(padded_length, fft_size, hop);
  std::vector<std::vector<bool>> mask;
  mask.reserve(lengths.size());
  for (std::size_t len : lengths) {
    const std::size_t valid = dsp::frame_count(len, fft_size, hop);
    std::vector<bool> m(total, false);
    std::fill_n(m.begin(), valid, true);
    mask.push_back(std::move(m));
  }
  return mask;
}

BatchSpectra batch_spectra(const PaddedBatch& batch, const dsp::AnalysisWindow& window) {
  BatchSpectra out;
  const auto mask = batch.frame_mask(window.length(), window.hop);
  for (std::size_t i = 0; i < batch.lengths.size(); ++i) {
    const auto valid = static_cast<std::size_t>(std::count(mask[i].begin(), mask[i].end(), true));
    out.noisy.push_back(dsp::stft(batch.noisy[i], window).first.values.slice_cols(0, valid));
    out.clean.push_back(dsp::stft(batch.clean[i], window).first.values.slice_cols(0, valid));
  }
  return out;
}

StageLosses batch_loss(const MultiStageModel& model, const PaddedBatch& batch) {
  const BatchSpectra spectra = batch_spectra(batch, analysis_window(model.config()));
  return evaluate_loss(model, spectra.noisy, spectra.clean);
}

void write_log(std::ostream& out, const TrainingLog& log) {
  char buf[64];
  for (const StepRecord& s : log.steps) {
    out << s.epoch << '\t' << s.step;
    for (double l : s.losses.per_stage) {
      std::snprintf(buf, sizeof buf, "\t%.9g", l);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "\t%.9g\n", s.losses.total);
    out << buf;
  }
}

TrainingLog fit(MultiStageModel& model, std::span<const Utterance> data, const TrainConfig& config,
                const FitOptions& options) {
  AdamState state;
  return fit(model, state, data, config, options);
}

TrainingLog fit(MultiStageModel& model, AdamState& state, std::span<const Utterance> data,
                const TrainConfig& config, const FitOptions& options) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("fit: empty dataset");
  const dsp::AnalysisWindow window = analysis_window(model.config());
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches = (data.size() + config.batch - 1) / config.batch;

  TrainingLog log;
  log.best_total = std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  model.store().zero_grad();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.max_steps && step >= config.max_steps) break;
    rng.shuffle(std::span(order));
    EpochRecord record{epoch, {}};
    std::size_t epoch_steps = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      if (config.max_steps && step >= config.max_steps) break;
      const std::size_t begin = b * config.batch;
      const std::size_t end = std::min(data.size(), begin + config.batch);
      std::vector<Utterance> items;
      for (std::size_t i = begin; i < end; ++i) items.push_back(data[order[i]]);
      const BatchSpectra spectra = batch_spectra(pad_batch(items), window);

      StageLosses losses = accumulate_gradients(model, spectra.noisy, spectra.clean);
      if (!std::isfinite(losses.total)) {
        throw TrainingDiverged("training diverged at step " + std::to_string(step + 1) +
                               ": total loss is not finite");
      }
      try {
        adam_step(model.store(), state, config);
      } catch (const NonFiniteGradient& e) {
        throw TrainingDiverged("training diverged at step " + std::to_string(step + 1) + ": " + e.what());
      }
      for (std::size_t i = 0; i < model.store().size(); ++i) {
        for (double v : model.store()[i].value.values()) {
          if (!std::isfinite(v)) {
            throw TrainingDiverged("training diverged at step " + std::to_string(step + 1) + ": parameter " +
                                   model.store()[i].name + " is not finite");
          }
        }
      }
      ++step;
      ++epoch_steps;
      if (record.mean.per_stage.empty()) record.mean.per_stage.assign(losses.per_stage.size(), 0.0);
      for (std::size_t k = 0; k < losses.per_stage.size(); ++k) record.mean.per_stage[k] += losses.per_stage[k];
      record.mean.total += losses.total;
      log.steps.push_back({epoch, step, std::move(losses)});
      if (options.log_stream) {
        TrainingLog one;
        one.steps.push_back(log.steps.back());
        write_log(*options.log_stream, one);
      }
    }
    if (epoch_steps == 0) break;
    for (double& l : record.mean.per_stage) l /= static_cast<double>(epoch_steps);
    record.mean.total /= static_cast<double>(epoch_steps);
    if (record.mean.total < log.best_total) {
      log.best_total = record.mean.total;
      log.best_epoch = epoch;
      if (options.best_checkpoint) save_checkpoint(model, &state, *options.best_checkpoint);
    }
    log.epochs.push_back(std::move(record));
  }
  return log;
}

}  // namespace satcn::train
