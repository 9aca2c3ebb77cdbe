// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "satcn/dsp.hpp"
#include "test_util.hpp"

using namespace satcn;
using namespace satcn::dsp;
using satcn::testing::direct_dft;
using satcn::testing::random_signal;
using satcn::testing::relative_l2;

TEST_CASE("hann window values") {
  const auto w = hann_window(512);
  CHECK(w.length() == 512);
  CHECK(w.hop == 256);
  CHECK(w.coefficients[0] == 0.0);
  for (std::size_t t = 0; t < 512; ++t) {
    CHECK(w.coefficients[t] == w.coefficients[511 - t]);
    CHECK(w.coefficients[t] >= 0.0);
    CHECK(w.coefficients[t] <= 1.0);
  }
  CHECK(hann_window(4).coefficients[1] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(hann_window(1), std::invalid_argument);
}

TEST_CASE("frame geometry") {
  CHECK(bin_count(512) == 257);
  CHECK(frame_count(512, 512, 256) == 1);
  CHECK(frame_count(513, 512, 256) == 2);
  CHECK(frame_count(768, 512, 256) == 2);
  CHECK(frame_count(4000, 128, 64) == 62);
  CHECK_THROWS_AS(frame_count(100, 128, 64), std::invalid_argument);
  Waveform shorty{std::vector<double>(100, 0.1), 8000};
  CHECK_THROWS_AS(stft(shorty, hann_window(128)), std::invalid_argument);
}

TEST_CASE("stft of zeros has zero magnitude and phase") {
  Waveform x{std::vector<double>(1000, 0.0), 16000};
  const auto [mag, phase] = stft(x, hann_window(128, 64));
  CHECK(mag.bins() == 65);
  for (double v : mag.values.values()) CHECK(v == 0.0);
  for (double v : phase.values.values()) CHECK(v == 0.0);
}

TEST_CASE("stft matches a per-frame direct DFT, including the padded tail") {
  Rng rng(11);
  const std::size_t n = 128, hop = 48;
  Waveform x{random_signal(rng, 1001), 16000};
  const auto win = hann_window(n, hop);
  const auto [mag, phase] = stft(x, win);
  const std::size_t frames = frame_count(x.size(), n, hop);
  REQUIRE(mag.frames() == frames);
  double worst = 0.0;
  for (std::size_t tau = 0; tau < frames; ++tau) {
    std::vector<double> frame(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t i = tau * hop + t;
      if (i < x.size()) frame[t] = x.samples[i] * win.coefficients[t];
    }
    for (std::size_t f = 0; f < mag.bins(); ++f) {
      const auto ref = direct_dft(frame, f);
      const auto got = std::polar(mag.values(f, tau), phase.values(f, tau));
      worst = std::max(worst, std::abs(ref - got));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("integer-bin cosine peaks at its bin") {
  const std::size_t n = 128, k = 9;
  Waveform x;
  for (std::size_t t = 0; t < 1024; ++t) {
    x.samples.push_back(std::cos(2.0 * std::numbers::pi * double(k * t) / double(n)));
  }
  const auto [mag, phase] = stft(x, hann_window(n, 64));
  for (std::size_t tau = 0; tau < mag.frames(); ++tau) {
    std::size_t best = 0;
    for (std::size_t f = 1; f < mag.bins(); ++f) {
      if (mag.values(f, tau) > mag.values(best, tau)) best = f;
    }
    CHECK(best == k);
  }
}

TEST_CASE("rectangular window concentrates a constant frame in DC") {
  const std::size_t n = 64;
  AnalysisWindow rect{std::vector<double>(n, 1.0), n};
  Waveform x{std::vector<double>(n, 1.0), 16000};
  const auto [mag, phase] = stft(x, rect);
  REQUIRE(mag.frames() == 1);
  CHECK(mag.values(0, 0) == doctest::Approx(64.0).epsilon(1e-14));
  for (std::size_t f = 1; f < mag.bins(); ++f) CHECK(mag.values(f, 0) < 1e-12);
}

TEST_CASE("per-frame energy satisfies Parseval") {
  Rng rng(5);
  const std::size_t n = 256;
  Waveform x{random_signal(rng, 2048), 16000};
  const auto win = hann_window(n);
  const auto [mag, phase] = stft(x, win);
  for (std::size_t tau = 0; tau < mag.frames(); ++tau) {
    double time_energy = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t i = tau * win.hop + t;
      const double v = i < x.size() ? x.samples[i] * win.coefficients[t] : 0.0;
      time_energy += v * v;
    }
    double spec = 0.0;
    for (std::size_t f = 0; f < mag.bins(); ++f) {
      const double e = mag.values(f, tau) * mag.values(f, tau);
      spec += (f == 0 || f == n / 2) ? e : 2.0 * e;
    }
    CHECK(std::abs(spec / double(n) - time_energy) <= 1e-9 * time_energy);
  }
}

TEST_CASE("stft is positively homogeneous") {
  Rng rng(7);
  Waveform x{random_signal(rng, 3000), 16000};
  Waveform y = x;
  for (double& v : y.samples) v *= 3.5;
  const auto win = hann_window(256);
  const auto [mx, px] = stft(x, win);
  const auto [my, py] = stft(y, win);
  for (std::size_t i = 0; i < mx.values.size(); ++i) {
    CHECK(my.values[i] == doctest::Approx(3.5 * mx.values[i]).epsilon(1e-12));
    if (mx.values[i] > 1e-9) CHECK(std::abs(py.values[i] - px.values[i]) < 1e-9);
  }
}

TEST_CASE("istft inverts stft on the fully covered interior") {
  Rng rng(2024);
  const auto win = hann_window(512, 256);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t len = 2048 + rng.below(3000);
    Waveform x{random_signal(rng, len), 16000};
    const auto [mag, phase] = stft(x, win);
    const auto y = istft(mag, phase, win, len, 16000);
    REQUIRE(y.size() == len);
    std::span<const double> a(y.samples), b(x.samples);
    CHECK(relative_l2(a.subspan(256, len - 512), b.subspan(256, len - 512)) < 1e-6);
  }
}

TEST_CASE("istft linearity and zero magnitude") {
  Rng rng(3);
  const auto win = hann_window(256);
  Waveform x{random_signal(rng, 2000), 16000};
  auto [mag, phase] = stft(x, win);
  const auto y1 = istft(mag, phase, win, 2000);
  Spectrogram doubled = mag;
  doubled.values *= 2.0;
  const auto y2 = istft(doubled, phase, win, 2000);
  for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y2.samples[i] == doctest::Approx(2.0 * y1.samples[i]).epsilon(1e-12));
  Spectrogram zero = mag;
  zero.values.fill(0.0);
  for (double v : istft(zero, phase, win, 2000).samples) CHECK(v == 0.0);
}

TEST_CASE("istft argument checks") {
  Rng rng(4);
  const auto win = hann_window(256);
  Waveform x{random_signal(rng, 2000), 16000};
  auto [mag, phase] = stft(x, win);
  PhaseMatrix bad{Tensor::matrix(mag.bins(), mag.frames() + 1)};
  CHECK_THROWS_AS(istft(mag, bad, win, 2000), std::invalid_argument);
  const std::size_t span = (mag.frames() - 1) * win.hop + win.length();
  CHECK_NOTHROW(istft(mag, phase, win, span));
  CHECK_THROWS_AS(istft(mag, phase, win, span + 1), std::invalid_argument);

  AnalysisWindow gappy = hann_window(64, 96);
  Waveform z{random_signal(rng, 1000), 16000};
  auto [gm, gp] = stft(z, gappy);
  CHECK_THROWS_AS(istft(gm, gp, gappy, 1000), DegenerateCoverage);
}

TEST_CASE("istft edge reference") {
  Rng rng(6);
  const auto win = hann_window(128, 64);
  Waveform x{random_signal(rng, 3000), 8000};
  const auto [mag, phase] = stft(x, win);

  const auto exact = istft(mag, phase, win, x.size(), 8000, x.samples);
  for (std::size_t t = 0; t < x.size(); ++t) CHECK(std::abs(exact.samples[t] - x.samples[t]) < 1e-12);

  Spectrogram masked = mag;
  for (std::size_t k = 0; k < masked.bins(); ++k) {
    const double g = rng.uniform(0.0, 1.0);
    for (std::size_t t = 0; t < masked.frames(); ++t) masked.values(k, t) *= g;
  }
  const auto plain = istft(masked, phase, win, x.size(), 8000);
  const auto blended = istft(masked, phase, win, x.size(), 8000, x.samples);

  std::vector<double> coverage((masked.frames() - 1) * win.hop + win.length(), 0.0);
  for (std::size_t f = 0; f < masked.frames(); ++f) {
    for (std::size_t i = 0; i < win.length(); ++i) coverage[f * win.hop + i] += std::pow(win.coefficients[i], 2);
  }
  const double partial = kEdgeCoverageFraction * *std::max_element(coverage.begin(), coverage.end());
  std::size_t blended_count = 0;
  double plain_peak = 0.0, blended_peak = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (coverage[t] >= partial) {
      CHECK(blended.samples[t] == plain.samples[t]);
      continue;
    }
    ++blended_count;
    const double a = coverage[t] / partial;
    CHECK(std::abs(blended.samples[t] - (a * plain.samples[t] + (1.0 - a) * x.samples[t])) < 1e-12);
    plain_peak = std::max(plain_peak, std::abs(plain.samples[t]));
    blended_peak = std::max(blended_peak, std::abs(blended.samples[t]));
  }
  CHECK(blended_count > 0);
  CHECK(blended_count < win.hop);
  MESSAGE("edge peak without reference " << plain_peak << ", with reference " << blended_peak);
  CHECK(blended_peak < plain_peak);

  CHECK_THROWS_AS(istft(masked, phase, win, x.size(), 8000, std::span(x.samples).first(100)),
                  std::invalid_argument);
}
