// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "satcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace satcn::metrics {
namespace {

constexpr double kResidualFloor = 1e-20;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check(std::span<const double> est, std::span<const double> ref, const char* what) {
  if (est.size() != ref.size()) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(est.size()) +
                                " vs " + std::to_string(ref.size()) + ")");
  }
}

double ratio_db(double signal, double residual) {
  if (residual <= kResidualFloor * signal) return kCapDb;
  if (signal == 0.0) return -kCapDb;
  return std::clamp(10.0 * std::log10(signal / residual), -kCapDb, kCapDb);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  check(estimate, reference, "si_sdr");
  const double ref_energy = dot(reference, reference);
  if (ref_energy == 0.0) throw std::invalid_argument("si_sdr: reference is all zeros");
  const double alpha = dot(estimate, reference) / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * reference[i];
    target += t * t;
    residual += (t - estimate[i]) * (t - estimate[i]);
  }
  return ratio_db(target, residual);
}

double snr_db(std::span<const double> estimate, std::span<const double> reference) {
  check(estimate, reference, "snr_db");
  const double ref_energy = dot(reference, reference);
  if (ref_energy == 0.0) throw std::invalid_argument("snr_db: reference is all zeros");
  double residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = estimate[i] - reference[i];
    residual += d * d;
  }
  return ratio_db(ref_energy, residual);
}

MetricReport evaluate_set(const MultiStageModel& model, std::span<const train::Utterance> pairs,
                          const ForwardOptions& options) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_set: empty test set");
  const dsp::AnalysisWindow window = analysis_window(model.config());
  MetricReport report;
  for (const train::Utterance& u : pairs) {
    if (u.noisy.size() != u.clean.size()) throw std::invalid_argument("evaluate_set: noisy/clean length mismatch");
    auto [mag, phase] = dsp::stft(u.noisy, window);
    const Tensor clean_mag = dsp::stft(u.clean, window).first.values;
    ForwardTrace trace = forward(model, mag.values, options);

    ItemMetrics m;
    for (const Tensor& est : trace.estimates) m.spectral_l1.push_back(nn::mean_abs_loss(est, clean_mag));
    mag.values = std::move(trace.estimates.back());
    const dsp::Waveform enhanced = dsp::istft(mag, phase, window, u.noisy.size(), u.noisy.sample_rate, u.noisy.samples);
    m.noisy_si_sdr = si_sdr(u.noisy.samples, u.clean.samples);
    m.enhanced_si_sdr = si_sdr(enhanced.samples, u.clean.samples);
    m.noisy_snr = snr_db(u.noisy.samples, u.clean.samples);
    m.enhanced_snr = snr_db(enhanced.samples, u.clean.samples);
    report.items.push_back(std::move(m));
  }

  const double inv = 1.0 / static_cast<double>(report.items.size());
  report.mean_spectral_l1.assign(model.stages().size(), 0.0);
  for (const ItemMetrics& m : report.items) {
    report.mean_noisy_si_sdr += m.noisy_si_sdr * inv;
    report.mean_enhanced_si_sdr += m.enhanced_si_sdr * inv;
    report.mean_noisy_snr += m.noisy_snr * inv;
    report.mean_enhanced_snr += m.enhanced_snr * inv;
    for (std::size_t k = 0; k < m.spectral_l1.size(); ++k) report.mean_spectral_l1[k] += m.spectral_l1[k] * inv;
  }
  return report;
}

std::string format_tsv(const MetricReport& report) {
  const std::size_t stages = report.mean_spectral_l1.size();
  std::ostringstream os;
  os << "item\tnoisy_si_sdr\tenhanced_si_sdr\tnoisy_snr\tenhanced_snr";
  for (std::size_t k = 1; k <= stages; ++k) os << "\tspectral_l1_stage" << k;
  os << '\n';
  auto row = [&os](const std::string& label, double a, double b, double c, double d,
                   const std::vector<double>& l1) {
    os << label << '\t' << fmt(a) << '\t' << fmt(b) << '\t' << fmt(c) << '\t' << fmt(d);
    for (double v : l1) os << '\t' << fmt(v);
    os << '\n';
  };
  for (std::size_t i = 0; i < report.items.size(); ++i) {
    const ItemMetrics& m = report.items[i];
    row(std::to_string(i), m.noisy_si_sdr, m.enhanced_si_sdr, m.noisy_snr, m.enhanced_snr, m.spectral_l1);
  }
  row("mean", report.mean_noisy_si_sdr, report.mean_enhanced_si_sdr, report.mean_noisy_snr,
      report.mean_enhanced_snr, report.mean_spectral_l1);
  return os.str();
}

std::string format_summary(const MetricReport& report) {
  std::ostringstream os;
  os << "items: " << report.items.size() << '\n';
  os << "noisy_si_sdr_db: " << fmt(report.mean_noisy_si_sdr) << '\n';
  os << "enhanced_si_sdr_db: " << fmt(report.mean_enhanced_si_sdr) << '\n';
  os << "si_sdr_improvement_db: " << fmt(report.si_sdr_improvement()) << '\n';
  os << "noisy_snr_db: " << fmt(report.mean_noisy_snr) << '\n';
  os << "enhanced_snr_db: " << fmt(report.mean_enhanced_snr) << '\n';
  for (std::size_t k = 0; k < report.mean_spectral_l1.size(); ++k) {
    os << "spectral_l1_stage" << (k + 1) << ": " << fmt(report.mean_spectral_l1[k]) << '\n';
  }
  return os.str();
}

}  // namespace satcn::metrics
