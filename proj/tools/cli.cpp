// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "satcn/audio.hpp"
#include "satcn/dsp.hpp"
#include "satcn/metrics.hpp"
#include "satcn/train.hpp"

namespace fs = std::filesystem;

namespace satcn::cli {
namespace {

// Bad invocation or unusable input; maps to kExitUsage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw UsageError(what + " not found: " + p.string());
}

audio::Waveform load_input_wav(const fs::path& p, const std::string& what) {
  require_file(p, what);
  try {
    return audio::read_wav(p);
  } catch (const audio::WavError& e) {
    throw UsageError(what + " " + p.string() + ": " + e.what());
  }
}

train::LoadedCheckpoint load_input_checkpoint(const fs::path& p) {
  require_file(p, "checkpoint");
  try {
    return train::load_checkpoint(p);
  } catch (const train::FormatError& e) {
    throw UsageError("checkpoint " + p.string() + ": " + e.what());
  }
}

// Writes through a sibling temporary so a failed command leaves no partial file.
void write_text_atomic(const fs::path& p, const std::string& text) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::size_t write_wav_atomic(const fs::path& p, const audio::Waveform& w) {
  fs::path tmp = p;
  tmp += ".tmp";
  const std::size_t clipped = audio::write_wav(tmp, w);
  fs::rename(tmp, p);
  return clipped;
}

void report_clipping(std::ostream& err, const fs::path& p, std::size_t clipped) {
  if (clipped > 0) err << "warning: " << clipped << " samples clipped in " << p.string() << "\n";
}

std::vector<train::Utterance> load_manifest_pairs(const fs::path& manifest) {
  require_file(manifest, "manifest");
  std::vector<audio::ManifestEntry> entries;
  try {
    entries = audio::read_manifest(manifest);
  } catch (const std::exception& e) {
    throw UsageError("manifest " + manifest.string() + ": " + e.what());
  }
  if (entries.empty()) throw UsageError("manifest " + manifest.string() + " has no entries");
  const fs::path base = manifest.parent_path();
  auto resolve = [&](const std::string& s) {
    fs::path p(s);
    return p.is_relative() ? base / p : p;
  };
  std::vector<train::Utterance> out;
  for (const auto& e : entries) {
    train::Utterance u;
    u.clean = load_input_wav(resolve(e.clean_path), "clean file");
    u.noisy = load_input_wav(resolve(e.noisy_path), "noisy file");
    if (u.clean.samples.size() != u.noisy.samples.size()) {
      throw UsageError("length mismatch between " + e.clean_path + " and " + e.noisy_path);
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::string format_count(std::size_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int cmd_info(const std::optional<fs::path>& config_path, std::ostream& out) {
  const ModelConfig cfg = config_path ? load_config(*config_path).model : ModelConfig{};
  const MultiStageModel model(cfg);
  const ParameterBreakdown p = count_parameters(model);
  out << "stages (K): " << cfg.stages << "\n"
      << "fusion blocks: " << cfg.fusion_count() << "\n"
      << "F: " << cfg.bins() << "\n"
      << "frame: N=" << cfg.fft_size << " hop=" << cfg.hop << "\n"
      << "tcn: H=" << cfg.hidden << " B=" << cfg.bottleneck << " R=" << cfg.stacks << " L=" << cfg.blocks
      << " P=" << cfg.kernel << "\n"
      << "receptive field per stack: " << receptive_field(cfg.kernel, cfg.blocks) << " frames\n"
      << "parameters:\n"
      << "  self-attention block: " << format_count(p.self_attention) << "\n"
      << "  tcn blocks per stage: " << format_count(p.tcn_blocks) << "\n"
      << "  bottleneck + projection: " << format_count(p.stage_glue) << "\n"
      << "  stage: " << format_count(p.stage) << "\n"
      << "  fusion block: " << format_count(p.fusion) << "\n"
      << "  total: " << format_count(p.total) << "\n";
  return kExitOk;
}

int cmd_mix(const fs::path& clean_path, const fs::path& noise_path, double snr, const fs::path& out_path,
            std::size_t offset, std::ostream& out, std::ostream& err) {
  const auto clean = load_input_wav(clean_path, "clean file");
  const auto noise = load_input_wav(noise_path, "noise file");
  if (clean.sample_rate != noise.sample_rate) throw UsageError("clean and noise sample rates differ");
  const auto noisy = audio::mix_at_snr(clean, noise, snr, offset);
  std::vector<double> residual(noisy.samples.size());
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = noisy.samples[i] - clean.samples[i];
  const double achieved = 10.0 * std::log10(audio::mean_square(clean.samples) / audio::mean_square(residual));
  report_clipping(err, out_path, write_wav_atomic(out_path, noisy));
  out << "achieved_snr_db: " << format_real(achieved) << "\n";
  return kExitOk;
}

int cmd_synth(std::size_t n, std::uint64_t seed, const fs::path& outdir, double duration, int rate,
              const std::vector<double>& snrs, std::ostream& out, std::ostream& err) {
  audio::ToyDatasetConfig cfg;
  cfg.count = n;
  cfg.duration_s = duration;
  cfg.sample_rate = rate;
  cfg.snrs_db = snrs;
  const auto items = audio::synth_toy_dataset(cfg, seed);
  fs::create_directories(outdir);
  std::vector<audio::ManifestEntry> entries;
  for (std::size_t i = 0; i < items.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%04zu", i);
    const std::string clean = std::string("clean_") + stem + ".wav";
    const std::string noisy = std::string("noisy_") + stem + ".wav";
    report_clipping(err, outdir / clean, write_wav_atomic(outdir / clean, items[i].clean));
    report_clipping(err, outdir / noisy, write_wav_atomic(outdir / noisy, items[i].noisy));
    entries.push_back({clean, noisy, items[i].snr_db});
  }
  audio::write_manifest(outdir / "manifest.tsv", entries);
  out << "wrote " << items.size() << " items to " << outdir.string() << "\n";
  return kExitOk;
}

int cmd_train(const fs::path& config_path, const std::optional<fs::path>& data, const fs::path& out_path,
              const std::optional<fs::path>& log_path, std::ostream& out) {
  const CliConfig cfg = load_config(config_path);
  const std::optional<fs::path> manifest = data ? data : cfg.train_manifest;
  if (!manifest) throw UsageError("no training manifest: pass --data or set train_manifest");
  const auto pairs = load_manifest_pairs(*manifest);
  MultiStageModel model(cfg.model);
  train::AdamState state;
  std::ostringstream log_text;
  train::FitOptions opts;
  const train::TrainingLog log = train::fit(model, state, pairs, cfg.train, opts);
  train::write_log(log_text, log);
  train::save_checkpoint(model, &state, out_path);
  if (log_path) {
    write_text_atomic(*log_path, log_text.str());
  } else {
    out << log_text.str();
  }
  return kExitOk;
}

int cmd_enhance(const fs::path& ckpt, const fs::path& in, const fs::path& out_path, std::ostream& err) {
  const auto noisy = load_input_wav(in, "input");
  const auto loaded = load_input_checkpoint(ckpt);
  if (noisy.samples.size() < loaded.model.config().fft_size) {
    throw UsageError("input shorter than one frame (" + std::to_string(loaded.model.config().fft_size) +
                     " samples)");
  }
  const auto enhanced = enhance(loaded.model, noisy);
  report_clipping(err, out_path, write_wav_atomic(out_path, enhanced));
  return kExitOk;
}

int cmd_eval(const fs::path& ckpt, const std::optional<fs::path>& manifest_arg,
             const std::optional<fs::path>& config_path, const std::string& format,
             const std::optional<fs::path>& out_path, std::ostream& out) {
  std::optional<fs::path> manifest = manifest_arg;
  if (!manifest && config_path) manifest = load_config(*config_path).eval_manifest;
  if (!manifest) throw UsageError("no evaluation manifest: pass --manifest or set eval_manifest");
  const auto pairs = load_manifest_pairs(*manifest);
  const auto loaded = load_input_checkpoint(ckpt);
  const auto report = metrics::evaluate_set(loaded.model, pairs);
  const std::string text = format == "tsv" ? metrics::format_tsv(report) : metrics::format_summary(report);
  if (out_path) {
    write_text_atomic(*out_path, text);
  } else {
    out << text;
  }
  return kExitOk;
}

int cmd_spec_dump(const fs::path& in, const fs::path& out_path, const std::optional<fs::path>& config_path,
                  std::size_t fft_size, std::size_t hop) {
  if (config_path) {
    const ModelConfig cfg = load_config(*config_path).model;
    fft_size = cfg.fft_size;
    hop = cfg.hop;
  }
  const auto wave = load_input_wav(in, "input");
  if (wave.samples.size() < fft_size) throw UsageError("input shorter than one frame");
  if (fft_size < 2 || hop == 0) throw UsageError("bad frame geometry");
  const auto spec = dsp::stft(wave, dsp::hann_window(fft_size, hop));
  const Tensor& m = spec.first.values;
  std::string text;
  for (std::size_t f = 0; f < m.rows(); ++f) {
    for (std::size_t t = 0; t < m.cols(); ++t) {
      if (t > 0) text += ',';
      text += format_real(m(f, t));
    }
    text += '\n';
  }
  write_text_atomic(out_path, text);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-stage self-attentive TCN speech enhancement", "satcn"};
  app.require_subcommand(1);

  std::optional<fs::path> config;
  std::optional<fs::path> data, log_path, manifest, out_opt;
  fs::path in, out_path, clean, noise, outdir, ckpt;
  double snr = 0.0, duration = 0.5;
  std::size_t count = 8, offset = 0, fft_size = 512, hop = 256;
  std::uint64_t seed = 0;
  int rate = 8000;
  std::vector<double> snrs{0.0, 5.0};
  std::string format = "summary";

  auto* info = app.add_subcommand("info", "Print parameter breakdown and frame geometry");
  info->add_option("--config", config, "Config file")->check(CLI::ExistingFile);

  auto* mix = app.add_subcommand("mix", "Mix clean speech and noise at a target SNR");
  mix->add_option("--clean", clean, "Clean WAV")->required();
  mix->add_option("--noise", noise, "Noise WAV")->required();
  mix->add_option("--snr", snr, "Target SNR in dB")->required();
  mix->add_option("--out", out_path, "Output WAV")->required();
  mix->add_option("--noise-offset", offset, "Start index into the (cyclic) noise");

  auto* synth = app.add_subcommand("synth", "Write a synthetic toy dataset and manifest");
  synth->add_option("--n", count, "Number of items")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--outdir", outdir, "Output directory")->required();
  synth->add_option("--duration", duration, "Seconds per item")->check(CLI::PositiveNumber);
  synth->add_option("--rate", rate, "Sample rate")->check(CLI::PositiveNumber);
  synth->add_option("--snrs", snrs, "SNR set in dB")->delimiter(',');

  auto* trn = app.add_subcommand("train", "Train a model and write a checkpoint");
  trn->add_option("--config", config, "Config file")->required();
  trn->add_option("--data", data, "Training manifest (overrides train_manifest)");
  trn->add_option("--out", out_path, "Checkpoint path")->required();
  trn->add_option("--log", log_path, "Training log path (default: stdout)");

  auto* enh = app.add_subcommand("enhance", "Enhance one WAV file");
  enh->add_option("--ckpt", ckpt, "Checkpoint")->required();
  enh->add_option("--in", in, "Noisy WAV")->required();
  enh->add_option("--out", out_path, "Enhanced WAV")->required();

  auto* ev = app.add_subcommand("eval", "Report SI-SDR, SNR and per-stage spectral L1");
  ev->add_option("--ckpt", ckpt, "Checkpoint")->required();
  ev->add_option("--manifest", manifest, "Evaluation manifest (overrides eval_manifest)");
  ev->add_option("--config", config, "Config file providing eval_manifest");
  ev->add_option("--format", format, "summary or tsv")->check(CLI::IsMember({"summary", "tsv"}));
  ev->add_option("--out", out_opt, "Report path (default: stdout)");

  auto* dump = app.add_subcommand("spec-dump", "Write the STFT magnitude as CSV (rows = bins)");
  dump->add_option("--in", in, "Input WAV")->required();
  dump->add_option("--out", out_path, "Output CSV")->required();
  dump->add_option("--config", config, "Config file providing fft_size and hop");
  dump->add_option("--fft-size", fft_size, "Frame length");
  dump->add_option("--hop", hop, "Hop size");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*info) return cmd_info(config, out);
    if (*mix) return cmd_mix(clean, noise, snr, out_path, offset, out, err);
    if (*synth) return cmd_synth(count, seed, outdir, duration, rate, snrs, out, err);
    if (*trn) return cmd_train(*config, data, out_path, log_path, out);
    if (*enh) return cmd_enhance(ckpt, in, out_path, err);
    if (*ev) return cmd_eval(ckpt, manifest, config, format, out_opt, out);
    if (*dump) return cmd_spec_dump(in, out_path, config, fft_size, hop);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace satcn::cli
