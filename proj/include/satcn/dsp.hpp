// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "satcn/tensor.hpp"

namespace satcn::dsp {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
};

/// Analysis/synthesis window together with its hop in samples.
struct AnalysisWindow {
  std::vector<double> coefficients;
  std::size_t hop = 0;

  std::size_t length() const { return coefficients.size(); }
};

/// F x T linear magnitude, F = fft_size / 2 + 1.
struct Spectrogram {
  Tensor values;
  std::size_t hop = 0;
  std::size_t fft_size = 0;

  std::size_t bins() const { return values.rows(); }
  std::size_t frames() const { return values.cols(); }
};

struct PhaseMatrix {
  Tensor values;
};

/// Raised by istft when a requested output sample is not covered by any frame.
class DegenerateCoverage : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kSynthesisFloor = 1e-8;
/// Coverage (sum of squared window values) below this fraction of its peak
/// counts as partial; see istft's edge_reference.
inline constexpr double kEdgeCoverageFraction = 0.1;

constexpr std::size_t bin_count(std::size_t fft_size) { return fft_size / 2 + 1; }

/// Number of frames after zero-padding the tail so the last partial frame is
/// complete: ceil((length - N) / hop) + 1. Requires length >= N.
std::size_t frame_count(std::size_t length, std::size_t fft_size, std::size_t hop);

/// Symmetric Hann window w(t) = sin^2(pi t / (N - 1)). hop defaults to N / 2.
AnalysisWindow hann_window(std::size_t n, std::size_t hop = 0);

/// STFT without frame centering. Bins with zero magnitude get phase 0.
std::pair<Spectrogram, PhaseMatrix> stft(const Waveform& x, const AnalysisWindow& win);

/// Weighted overlap-add inverse, normalized by the per-sample sum of squared
/// window values (floored at kSynthesisFloor). The result has out_len samples
/// and keeps the sample rate passed in.
///
/// A modified spectrogram is generally inconsistent, and where coverage is
/// partial (the first frame's rising edge) normalization amplifies that
/// inconsistency by up to 1 / w(t). When edge_reference is given (at least
/// out_len samples, typically the unmodified input), samples with coverage c
/// below kEdgeCoverageFraction * peak become a * y + (1 - a) * reference with
/// a = c / (kEdgeCoverageFraction * peak). Fully covered samples are unchanged.
Waveform istft(const Spectrogram& mag, const PhaseMatrix& phase, const AnalysisWindow& win,
               std::size_t out_len, int sample_rate = 16000,
               std::span<const double> edge_reference = {});

}  // namespace satcn::dsp
