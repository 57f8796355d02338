#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "iopcal/matrix.hpp"

namespace iopcal {

inline constexpr std::size_t kDefaultBins = 15;

/// One equal-width confidence bin [lo, hi); the top bin also holds 1.0.
/// For classwise diagrams `acc` is the observed class frequency.
struct BinRecord {
  std::size_t index = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double conf = 0.0;
  double acc = 0.0;
  double gap = 0.0;  // acc - conf (times count/N in weighted diagrams)
};

/// Bin holding `value` among `bins` equal-width bins on [0, 1].
std::size_t bin_index(double value, std::size_t bins);

/// Throws invalid-input unless rows are non-negative and sum to 1 within
/// 1e-6, and labels are in range.
void validate_probabilities(const Matrix& probs, std::span<const std::uint32_t> labels);

Matrix softmax_rows(const Matrix& logits);

/// Top-1 index with lowest-index tie break.
std::size_t argmax(std::span<const double> values);

double ece(const Matrix& probs, std::span<const std::uint32_t> labels,
           std::size_t bins = kDefaultBins);
double classwise_ece(const Matrix& probs, std::span<const std::uint32_t> labels,
                     std::size_t bins = kDefaultBins);
/// Squared error summed over classes and divided by N * k.
double brier(const Matrix& probs, std::span<const std::uint32_t> labels);
/// Mean of -log p_label with p clamped at 1e-12.
double nll_metric(const Matrix& probs, std::span<const std::uint32_t> labels);
double accuracy_topk(const Matrix& probs, std::span<const std::uint32_t> labels, std::size_t k);

std::vector<BinRecord> reliability_diagram(const Matrix& probs,
                                           std::span<const std::uint32_t> labels,
                                           std::size_t bins = kDefaultBins,
                                           bool weighted = false);
std::vector<std::vector<BinRecord>> classwise_reliability(const Matrix& probs,
                                                          std::span<const std::uint32_t> labels,
                                                          std::size_t bins = kDefaultBins);

/// Plug-in root-mean-square top-label calibration error.
double l2_ece(const Matrix& probs, std::span<const std::uint32_t> labels,
              std::size_t bins = kDefaultBins);
/// Plug-in l2 estimate with the per-bin sampling-variance term
/// acc(1-acc)/(count-1) removed; bins with count <= 1 contribute 0.
double debiased_ece(const Matrix& probs, std::span<const std::uint32_t> labels,
                    std::size_t bins = kDefaultBins);
/// Plug-in classwise l2 calibration error averaged over classes.
double l2_classwise_ce(const Matrix& probs, std::span<const std::uint32_t> labels,
                       std::size_t bins = kDefaultBins);
/// Classwise analogue of debiased_ece.
double marginal_ce(const Matrix& probs, std::span<const std::uint32_t> labels,
                   std::size_t bins = kDefaultBins);

/// Mean over entries of value / baseline.
double average_relative_error(std::span<const double> values, std::span<const double> baselines);

inline const std::vector<std::string>& all_metric_names() {
  static const std::vector<std::string> names = {
      "ece", "classwise_ece", "nll", "brier", "accuracy", "topk_accuracy",
      "debiased_ece", "marginal_ce"};
  return names;
}

struct MetricOptions {
  std::vector<std::string> metrics = all_metric_names();
  std::size_t bins = kDefaultBins;
  std::size_t topk = 5;  // clamped to n_classes
  bool weighted_diagram = false;
};

struct MetricReport {
  std::map<std::string, double> values;
  std::vector<BinRecord> bins;
  std::vector<std::vector<BinRecord>> classwise_bins;
};

MetricReport evaluate(const Matrix& probs, std::span<const std::uint32_t> labels,
                      const MetricOptions& options = {});

/// Flat JSON object of the metric values (plus any extra entries). Each
/// debiased_ece / marginal_ce entry gets a "<name>_formula": "external-formula"
/// companion.
std::string to_json(const MetricReport& report,
                    const std::map<std::string, double>& extra = {});
/// CSV with header bin_lo,bin_hi,count,conf,acc,gap.
std::string bins_to_csv(std::span<const BinRecord> bins);

}  // namespace iopcal
