// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "satcn/dsp.hpp"

namespace satcn::audio {

using dsp::Waveform;

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads a RIFF/WAVE PCM16 mono file, samples scaled by 1/32768.
Waveform read_wav(const std::filesystem::path& path);
/// Writes PCM16 mono; returns the number of samples clamped to [-1, 1).
std::size_t write_wav(const std::filesystem::path& path, const Waveform& wave);

double mean_square(const std::vector<double>& x);

/// clean + g * noise with g chosen so that the clean-to-scaled-noise power
/// ratio over the clean span equals snr_db. Noise shorter than the clean
/// signal is tiled cyclically starting at noise_offset.
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db,
                    std::size_t noise_offset = 0);

struct ToyDatasetConfig {
  std::size_t count = 8;
  double duration_s = 0.5;
  int sample_rate = 8000;
  std::vector<double> snrs_db{0.0, 5.0};
  double min_f0 = 90.0;
  double max_f0 = 260.0;
  double amplitude = 0.3;
};

struct ToyItem {
  Waveform clean;
  Waveform noise;
  Waveform noisy;
  double snr_db = 0.0;
};

/// Clean items are 2-4 harmonics of a fixed fundamental with slow
/// amplitude envelopes; noise is low-pass filtered white noise.
std::vector<ToyItem> synth_toy_dataset(const ToyDatasetConfig& config, std::uint64_t seed);

struct ManifestEntry {
  std::string clean_path;
  std::string noisy_path;
  double snr_db = 0.0;
};

/// `clean_path<TAB>noisy_path<TAB>snr_db`, one entry per line. Relative paths
/// are resolved against the manifest's directory by the caller.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

}  // namespace satcn::audio
