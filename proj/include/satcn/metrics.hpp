// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "satcn/model.hpp"
#include "satcn/train.hpp"

namespace satcn::metrics {

inline constexpr double kCapDb = 100.0;

/// Scale-invariant SDR in dB, capped at kCapDb. No mean removal.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);
/// 10 log10(|ref|^2 / |est - ref|^2), capped at kCapDb.
double snr_db(std::span<const double> estimate, std::span<const double> reference);

struct ItemMetrics {
  double noisy_si_sdr = 0.0;
  double enhanced_si_sdr = 0.0;
  double noisy_snr = 0.0;
  double enhanced_snr = 0.0;
  std::vector<double> spectral_l1;  // per stage
};

struct MetricReport {
  std::vector<ItemMetrics> items;
  double mean_noisy_si_sdr = 0.0;
  double mean_enhanced_si_sdr = 0.0;
  double mean_noisy_snr = 0.0;
  double mean_enhanced_snr = 0.0;
  std::vector<double> mean_spectral_l1;

  double si_sdr_improvement() const { return mean_enhanced_si_sdr - mean_noisy_si_sdr; }
};

/// Enhances every noisy item (eval mode) and scores it against its clean
/// reference.
MetricReport evaluate_set(const MultiStageModel& model, std::span<const train::Utterance> pairs,
                          const ForwardOptions& options = {});

/// One header line and one line per item, then a `mean` line.
std::string format_tsv(const MetricReport& report);
/// `key: value` lines in a fixed order.
std::string format_summary(const MetricReport& report);

}  // namespace satcn::metrics
