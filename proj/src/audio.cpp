// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "satcn/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "satcn/random.hpp"

namespace satcn::audio {
namespace {

std::uint32_t u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("cannot open " + path.string());
  const std::vector<std::uint8_t> buf(std::istreambuf_iterator<char>(in), {});
  const std::string where = path.string() + ": ";

  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0) {
    throw WavError(where + "missing RIFF chunk");
  }
  if (std::memcmp(buf.data() + 8, "WAVE", 4) != 0) throw WavError(where + "RIFF form is not WAVE");

  bool have_fmt = false;
  Waveform wave;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(reinterpret_cast<const char*>(buf.data() + pos), 4);
    const std::uint32_t size = u32(buf.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (size > buf.size() - body) throw WavError(where + "chunk '" + id + "' extends past end of file");
    const std::uint8_t* p = buf.data() + body;
    if (id == "fmt ") {
      if (size < 16) throw WavError(where + "chunk 'fmt ' too short");
      std::uint16_t format = u16(p);
      const std::uint16_t channels = u16(p + 2);
      const std::uint32_t rate = u32(p + 4);
      const std::uint16_t bits = u16(p + 14);
      if (format == 0xFFFE && size >= 26) format = u16(p + 24);  // extensible: sub-format GUID
      if (format != 1) throw WavError(where + "chunk 'fmt ': format " + std::to_string(format) + " is not PCM");
      if (channels != 1) {
        throw WavError(where + "chunk 'fmt ': " + std::to_string(channels) + " channels, only mono is supported");
      }
      if (bits != 16) throw WavError(where + "chunk 'fmt ': " + std::to_string(bits) + "-bit samples, expected 16");
      wave.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw WavError(where + "chunk 'data' precedes chunk 'fmt '");
      const std::size_t n = size / 2;
      wave.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto s = static_cast<std::int16_t>(u16(p + 2 * i));
        wave.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return wave;
    }
    pos = body + size + (size & 1);
  }
  throw WavError(where + (have_fmt ? "no 'data' chunk" : "no 'fmt ' chunk"));
}

std::size_t write_wav(const std::filesystem::path& path, const Waveform& wave) {
  if (wave.sample_rate <= 0) throw WavError("write_wav: sample rate must be positive");
  std::size_t clipped = 0;
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  put_tag(out, "data");
  put32(out, data_bytes);
  for (double x : wave.samples) {
    double q = std::nearbyint(x * 32768.0);
    if (!(q <= 32767.0 && q >= -32768.0)) {
      ++clipped;
      q = std::isnan(q) ? 0.0 : std::clamp(q, -32768.0, 32767.0);
    }
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw WavError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw WavError("write failed: " + path.string());
  return clipped;
}

double mean_square(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db, std::size_t noise_offset) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("mix_at_snr: SNR must be finite");
  if (clean.samples.empty()) throw std::invalid_argument("mix_at_snr: empty clean signal");
  if (noise.samples.empty()) throw std::invalid_argument("mix_at_snr: empty noise signal");
  const std::size_t n = clean.size();
  std::vector<double> segment(n);
  for (std::size_t t = 0; t < n; ++t) segment[t] = noise.samples[(noise_offset + t) % noise.size()];
  const double p_clean = mean_square(clean.samples);
  const double p_noise = mean_square(segment);
  if (p_clean == 0.0) throw std::invalid_argument("mix_at_snr: clean signal is silent, SNR undefined");
  if (p_noise == 0.0) throw std::invalid_argument("mix_at_snr: noise is silent, SNR undefined");
  const double gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  Waveform out;
  out.sample_rate = clean.sample_rate;
  out.samples.resize(n);
  for (std::size_t t = 0; t < n; ++t) out.samples[t] = clean.samples[t] + gain * segment[t];
  return out;
}

std::vector<ToyItem> synth_toy_dataset(const ToyDatasetConfig& config, std::uint64_t seed) {
  if (config.count < 1) throw std::invalid_argument("synth_toy_dataset: count must be >= 1");
  if (config.snrs_db.empty()) throw std::invalid_argument("synth_toy_dataset: empty SNR set");
  if (config.sample_rate <= 0 || config.duration_s <= 0.0) {
    throw std::invalid_argument("synth_toy_dataset: bad duration or sample rate");
  }
  const auto length = static_cast<std::size_t>(std::llround(config.duration_s * config.sample_rate));
  const double fs = config.sample_rate;
  const double two_pi = 2.0 * std::numbers::pi;
  Rng rng(seed);
  std::vector<ToyItem> items;
  items.reserve(config.count);
  for (std::size_t item = 0; item < config.count; ++item) {
    ToyItem out;
    out.clean.sample_rate = out.noise.sample_rate = config.sample_rate;
    out.clean.samples.assign(length, 0.0);

    const double f0 = rng.uniform(config.min_f0, config.max_f0);
    const auto harmonics = static_cast<std::size_t>(2 + rng.below(3));
    for (std::size_t h = 1; h <= harmonics; ++h) {
      const double freq = f0 * static_cast<double>(h);
      if (freq >= 0.45 * fs) break;
      const double phase = rng.uniform(0.0, two_pi);
      const double env_rate = rng.uniform(0.5, 3.0);
      const double env_phase = rng.uniform(0.0, two_pi);
      const double amp = 1.0 / static_cast<double>(h);
      for (std::size_t t = 0; t < length; ++t) {
        const double time = static_cast<double>(t) / fs;
        const double env = 0.6 + 0.4 * std::sin(two_pi * env_rate * time + env_phase);
        out.clean.samples[t] += amp * env * std::sin(two_pi * freq * time + phase);
      }
    }
    double peak = 0.0;
    for (double v : out.clean.samples) peak = std::max(peak, std::abs(v));
    for (double& v : out.clean.samples) v *= config.amplitude / peak;

    // One-pole low-pass over white Gaussian noise.
    const double pole = rng.uniform(0.2, 0.8);
    out.noise.samples.resize(length);
    double state = 0.0;
    for (double& v : out.noise.samples) {
      state = pole * state + (1.0 - pole) * rng.normal();
      v = state;
    }

    out.snr_db = config.snrs_db[rng.below(config.snrs_db.size())];
    out.noisy = mix_at_snr(out.clean, out.noise, out.snr_db);
    items.push_back(std::move(out));
  }
  return items;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    if (fields.size() != 3) {
      throw std::runtime_error(path.string() + ":" + std::to_string(number) + ": expected 3 tab-separated fields");
    }
    ManifestEntry e{fields[0], fields[1], 0.0};
    try {
      std::size_t used = 0;
      e.snr_db = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(number) + ": bad SNR '" + fields[2] + "'");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  char snr[32];
  for (const ManifestEntry& e : entries) {
    std::snprintf(snr, sizeof snr, "%.17g", e.snr_db);
    out << e.clean_path << '\t' << e.noisy_path << '\t' << snr << '\n';
  }
}

}  // namespace satcn::audio
