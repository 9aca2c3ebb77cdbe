// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "satcn/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <string>

namespace satcn::dsp {
namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    std::lock_guard lock(planner_mutex());
    real_ = fftw_alloc_real(n_);
    spectrum_ = fftw_alloc_complex(n_ / 2 + 1);
    const int size = static_cast<int>(n_);
    forward_ = fftw_plan_dft_r2c_1d(size, real_, spectrum_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(size, spectrum_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(real_);
    fftw_free(spectrum_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* time() { return real_; }
  std::complex<double> bin(std::size_t k) const { return {spectrum_[k][0], spectrum_[k][1]}; }
  void set_bin(std::size_t k, std::complex<double> v) {
    spectrum_[k][0] = v.real();
    spectrum_[k][1] = v.imag();
  }
  void forward() { fftw_execute(forward_); }
  /// Unnormalized; time() then holds n * x.
  void inverse() { fftw_execute(inverse_); }

 private:
  std::size_t n_;
  double* real_ = nullptr;
  fftw_complex* spectrum_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

void check_window(const AnalysisWindow& win) {
  if (win.length() < 2) throw std::invalid_argument("analysis window shorter than 2 samples");
  if (win.hop == 0) throw std::invalid_argument("analysis window hop must be positive");
}

}  // namespace

std::size_t frame_count(std::size_t length, std::size_t fft_size, std::size_t hop) {
  if (length < fft_size) {
    throw std::invalid_argument("waveform of " + std::to_string(length) +
                                " samples is shorter than one frame (" + std::to_string(fft_size) + ")");
  }
  return (length - fft_size + hop - 1) / hop + 1;
}

AnalysisWindow hann_window(std::size_t n, std::size_t hop) {
  if (n < 2) throw std::invalid_argument("hann_window: N must be at least 2");
  AnalysisWindow win;
  win.hop = hop == 0 ? n / 2 : hop;
  win.coefficients.resize(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t t = 0; t < n; ++t) {
    const double s = std::sin(std::numbers::pi * static_cast<double>(t) / denom);
    win.coefficients[t] = s * s;
  }
  // Exact symmetry regardless of sin rounding.
  for (std::size_t t = 0; t < n / 2; ++t) win.coefficients[n - 1 - t] = win.coefficients[t];
  return win;
}

std::pair<Spectrogram, PhaseMatrix> stft(const Waveform& x, const AnalysisWindow& win) {
  check_window(win);
  const std::size_t n = win.length();
  const std::size_t hop = win.hop;
  const std::size_t frames = frame_count(x.size(), n, hop);
  const std::size_t bins = bin_count(n);

  Spectrogram mag{Tensor::matrix(bins, frames), hop, n};
  PhaseMatrix phase{Tensor::matrix(bins, frames)};
  RealFft fft(n);
  for (std::size_t tau = 0; tau < frames; ++tau) {
    const std::size_t start = tau * hop;
    double* buf = fft.time();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = start + i;
      buf[i] = idx < x.size() ? win.coefficients[i] * x.samples[idx] : 0.0;
    }
    fft.forward();
    for (std::size_t k = 0; k < bins; ++k) {
      const std::complex<double> c = fft.bin(k);
      const double m = std::abs(c);
      mag.values(k, tau) = m;
      phase.values(k, tau) = m == 0.0 ? 0.0 : std::arg(c);
    }
  }
  return {std::move(mag), std::move(phase)};
}

Waveform istft(const Spectrogram& mag, const PhaseMatrix& phase, const AnalysisWindow& win,
               std::size_t out_len, int sample_rate, std::span<const double> edge_reference) {
  check_window(win);
  require_same_shape(mag.values, phase.values, "istft magnitude/phase");
  const std::size_t n = win.length();
  const std::size_t hop = win.hop;
  const std::size_t bins = mag.values.rows();
  const std::size_t frames = mag.values.cols();
  if (bins != bin_count(n)) {
    throw std::invalid_argument("istft: " + std::to_string(bins) + " bins do not match window length " +
                                std::to_string(n));
  }
  const std::size_t span = frames == 0 ? 0 : (frames - 1) * hop + n;
  if (out_len > span) {
    throw std::invalid_argument("istft: requested " + std::to_string(out_len) +
                                " samples but frames cover only " + std::to_string(span));
  }
  if (!edge_reference.empty() && edge_reference.size() < out_len) {
    throw std::invalid_argument("istft: edge reference has " + std::to_string(edge_reference.size()) +
                                " samples, need " + std::to_string(out_len));
  }
  if (hop > n && frames > 1 && out_len > n) {
    throw DegenerateCoverage("istft: hop " + std::to_string(hop) + " exceeds frame length " +
                             std::to_string(n) + "; samples between frames are not covered");
  }

  std::vector<double> numer(span, 0.0);
  std::vector<double> denom(span, 0.0);
  RealFft fft(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t tau = 0; tau < frames; ++tau) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double m = mag.values(k, tau);
      const double ph = phase.values(k, tau);
      fft.set_bin(k, {m * std::cos(ph), m * std::sin(ph)});
    }
    fft.inverse();
    const double* buf = fft.time();
    const std::size_t start = tau * hop;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = win.coefficients[i];
      numer[start + i] += w * buf[i] * scale;
      denom[start + i] += w * w;
    }
  }

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.resize(out_len);
  for (std::size_t t = 0; t < out_len; ++t) {
    out.samples[t] = numer[t] / std::max(denom[t], kSynthesisFloor);
  }
  if (!edge_reference.empty()) {
    const double peak = *std::max_element(denom.begin(), denom.end());
    const double partial = kEdgeCoverageFraction * peak;
    for (std::size_t t = 0; t < out_len; ++t) {
      if (denom[t] >= partial) continue;
      const double a = denom[t] / partial;
      out.samples[t] = a * out.samples[t] + (1.0 - a) * edge_reference[t];
    }
  }
  return out;
}

}  // namespace satcn::dsp
