#include "iopcal/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "iopcal/calibrators.hpp"
#include "iopcal/error.hpp"

namespace iopcal {

namespace {

constexpr double kProbClamp = 1e-12;

struct BinStats {
  std::size_t count = 0;
  double sum_conf = 0.0;
  double sum_hit = 0.0;
};

double bin_lo(std::size_t m, std::size_t bins) {
  return static_cast<double>(m) / static_cast<double>(bins);
}

void require_bins(std::size_t bins) {
  if (bins < 1) fail(ErrorKind::invalid_input, "metrics: bin count must be >= 1");
}

std::vector<BinStats> top_label_bins(const Matrix& probs, std::span<const std::uint32_t> labels,
                                     std::size_t bins) {
  std::vector<BinStats> stats(bins);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    const std::size_t pred = argmax(row);
    BinStats& s = stats[bin_index(row[pred], bins)];
    ++s.count;
    s.sum_conf += row[pred];
    s.sum_hit += pred == labels[i] ? 1.0 : 0.0;
  }
  return stats;
}

std::vector<BinStats> class_bins(const Matrix& probs, std::span<const std::uint32_t> labels,
                                 std::size_t cls, std::size_t bins) {
  std::vector<BinStats> stats(bins);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const double p = probs(i, cls);
    BinStats& s = stats[bin_index(p, bins)];
    ++s.count;
    s.sum_conf += p;
    s.sum_hit += labels[i] == cls ? 1.0 : 0.0;
  }
  return stats;
}

// sum_m (count/N) * gap^2, optionally minus the sampling-variance term.
double squared_gap(const std::vector<BinStats>& stats, std::size_t n, bool debias) {
  double total = 0.0;
  for (const BinStats& s : stats) {
    if (s.count == 0) continue;
    const double acc = s.sum_hit / static_cast<double>(s.count);
    const double conf = s.sum_conf / static_cast<double>(s.count);
    const double weight = static_cast<double>(s.count) / static_cast<double>(n);
    double term = (acc - conf) * (acc - conf);
    if (debias) {
      if (s.count <= 1) continue;
      term -= acc * (1.0 - acc) / static_cast<double>(s.count - 1);
    }
    total += weight * term;
  }
  return total;
}

std::vector<BinRecord> to_records(const std::vector<BinStats>& stats, std::size_t n,
                                  bool weighted) {
  const std::size_t bins = stats.size();
  std::vector<BinRecord> out(bins);
  for (std::size_t m = 0; m < bins; ++m) {
    BinRecord& r = out[m];
    r.index = m;
    r.lo = bin_lo(m, bins);
    r.hi = bin_lo(m + 1, bins);
    r.count = stats[m].count;
    if (r.count > 0) {
      r.conf = stats[m].sum_conf / static_cast<double>(r.count);
      r.acc = stats[m].sum_hit / static_cast<double>(r.count);
      r.gap = r.acc - r.conf;
      if (weighted) r.gap *= static_cast<double>(r.count) / static_cast<double>(n);
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

std::size_t bin_index(double value, std::size_t bins) {
  require_bins(bins);
  const double scaled = std::floor(value * static_cast<double>(bins));
  std::size_t idx = scaled <= 0.0 ? 0 : std::min(static_cast<std::size_t>(scaled), bins - 1);
  // Settle rounding at the boundaries so idx agrees with lo(idx) <= value < lo(idx+1).
  while (idx > 0 && value < bin_lo(idx, bins)) --idx;
  while (idx + 1 < bins && value >= bin_lo(idx + 1, bins)) ++idx;
  return idx;
}

void validate_probabilities(const Matrix& probs, std::span<const std::uint32_t> labels) {
  if (probs.rows() == 0 || probs.cols() == 0) fail(ErrorKind::invalid_input, "metrics: empty input");
  if (labels.size() != probs.rows()) {
    fail(ErrorKind::invalid_input, "metrics: labels and probability rows differ in length");
  }
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double sum = 0.0;
    for (double p : probs.row(i)) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        fail(ErrorKind::invalid_input, "metrics: invalid probability in row " + std::to_string(i));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      fail(ErrorKind::invalid_input, "metrics: row " + std::to_string(i) + " sums to " +
                                         format_double(sum));
    }
    if (labels[i] >= probs.cols()) {
      fail(ErrorKind::invalid_input, "metrics: label out of range in row " + std::to_string(i));
    }
  }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto p = softmax(logits.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < values.size(); ++j) {
    if (values[j] > values[best]) best = j;
  }
  return best;
}

double ece(const Matrix& probs, std::span<const std::uint32_t> labels, std::size_t bins) {
  require_bins(bins);
  validate_probabilities(probs, labels);
  const auto stats = top_label_bins(probs, labels, bins);
  const double n = static_cast<double>(probs.rows());
  double total = 0.0;
  for (const BinStats& s : stats) {
    if (s.count == 0) continue;
    const double acc = s.sum_hit / static_cast<double>(s.count);
    const double conf = s.sum_conf / static_cast<double>(s.count);
    total += (static_cast<double>(s.count) / n) * std::abs(acc - conf);
  }
  return total;
}

double classwise_ece(const Matrix& probs, std::span<const std::uint32_t> labels,
                     std::size_t bins) {
  require_bins(bins);
  validate_probabilities(probs, labels);
  const double n = static_cast<double>(probs.rows());
  double total = 0.0;
  for (std::size_t j = 0; j < probs.cols(); ++j) {
    double per_class = 0.0;
    for (const BinStats& s : class_bins(probs, labels, j, bins)) {
      if (s.count == 0) continue;
      const double freq = s.sum_hit / static_cast<double>(s.count);
      const double conf = s.sum_conf / static_cast<double>(s.count);
      per_class += (static_cast<double>(s.count) / n) * std::abs(freq - conf);
    }
    total += per_class;
  }
  return total / static_cast<double>(probs.cols());
}

double brier(const Matrix& probs, std::span<const std::uint32_t> labels) {
  validate_probabilities(probs, labels);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double d = row[j] - (labels[i] == j ? 1.0 : 0.0);
      total += d * d;
    }
  }
  return total / (static_cast<double>(probs.rows()) * static_cast<double>(probs.cols()));
}

double nll_metric(const Matrix& probs, std::span<const std::uint32_t> labels) {
  validate_probabilities(probs, labels);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    total -= std::log(std::max(probs(i, labels[i]), kProbClamp));
  }
  return total / static_cast<double>(probs.rows());
}

double accuracy_topk(const Matrix& probs, std::span<const std::uint32_t> labels, std::size_t k) {
  validate_probabilities(probs, labels);
  if (k < 1 || k > probs.cols()) {
    fail(ErrorKind::invalid_input, "accuracy_topk: k must be in [1, n_classes]");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    const std::size_t y = labels[i];
    // Rank of the label under descending order with lowest-index tie break.
    std::size_t rank = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

std::vector<BinRecord> reliability_diagram(const Matrix& probs,
                                           std::span<const std::uint32_t> labels,
                                           std::size_t bins, bool weighted) {
  require_bins(bins);
  validate_probabilities(probs, labels);
  return to_records(top_label_bins(probs, labels, bins), probs.rows(), weighted);
}

std::vector<std::vector<BinRecord>> classwise_reliability(const Matrix& probs,
                                                          std::span<const std::uint32_t> labels,
                                                          std::size_t bins) {
  require_bins(bins);
  validate_probabilities(probs, labels);
  std::vector<std::vector<BinRecord>> out;
  out.reserve(probs.cols());
  for (std::size_t j = 0; j < probs.cols(); ++j) {
    out.push_back(to_records(class_bins(probs, labels, j, bins), probs.rows(), false));
  }
  return out;
}

double l2_ece(const Matrix& probs, std::span<const std::uint32_t> labels, std::size_t bins) {
  require_bins(bins);
  validate_probabilities(probs, labels);
  return std::sqrt(squared_gap(top_label_bins(probs, labels, bins), probs.rows(), false));
}

double debiased_ece(const Matrix& probs, std::span<const std::uint32_t> labels,
                    std::size_t bins) {
  require_bins(bins);
  validate_probabilities(probs, labels);
  const double sq = squared_gap(top_label_bins(probs, labels, bins), probs.rows(), true);
  return std::sqrt(std::max(sq, 0.0));
}

double l2_classwise_ce(const Matrix& probs, std::span<const std::uint32_t> labels,
                       std::size_t bins) {
  require_bins(bins);
  validate_probabilities(probs, labels);
  double total = 0.0;
  for (std::size_t j = 0; j < probs.cols(); ++j) {
    total += squared_gap(class_bins(probs, labels, j, bins), probs.rows(), false);
  }
  return std::sqrt(total / static_cast<double>(probs.cols()));
}

double marginal_ce(const Matrix& probs, std::span<const std::uint32_t> labels,
                   std::size_t bins) {
  require_bins(bins);
  validate_probabilities(probs, labels);
  double total = 0.0;
  for (std::size_t j = 0; j < probs.cols(); ++j) {
    total += squared_gap(class_bins(probs, labels, j, bins), probs.rows(), true);
  }
  return std::sqrt(std::max(total / static_cast<double>(probs.cols()), 0.0));
}

double average_relative_error(std::span<const double> values, std::span<const double> baselines) {
  if (values.size() != baselines.size() || values.empty()) {
    fail(ErrorKind::invalid_input, "average_relative_error: need equal, non-empty inputs");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (baselines[i] == 0.0) {
      total += values[i] == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    } else {
      total += values[i] / baselines[i];
    }
  }
  return total / static_cast<double>(values.size());
}

MetricReport evaluate(const Matrix& probs, std::span<const std::uint32_t> labels,
                      const MetricOptions& options) {
  validate_probabilities(probs, labels);
  MetricReport report;
  const std::size_t topk = std::min(options.topk, probs.cols());
  for (const std::string& name : options.metrics) {
    double v = 0.0;
    if (name == "ece") {
      v = ece(probs, labels, options.bins);
    } else if (name == "classwise_ece") {
      v = classwise_ece(probs, labels, options.bins);
    } else if (name == "nll") {
      v = nll_metric(probs, labels);
    } else if (name == "brier") {
      v = brier(probs, labels);
    } else if (name == "accuracy") {
      v = accuracy_topk(probs, labels, 1);
    } else if (name == "topk_accuracy") {
      v = accuracy_topk(probs, labels, topk);
    } else if (name == "debiased_ece") {
      v = debiased_ece(probs, labels, options.bins);
    } else if (name == "marginal_ce") {
      v = marginal_ce(probs, labels, options.bins);
    } else {
      fail(ErrorKind::invalid_input, "evaluate: unknown metric '" + name + "'");
    }
    report.values[name] = v;
  }
  report.bins = reliability_diagram(probs, labels, options.bins, options.weighted_diagram);
  report.classwise_bins = classwise_reliability(probs, labels, options.bins);
  return report;
}

std::string to_json(const MetricReport& report, const std::map<std::string, double>& extra) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, value] : report.values) j[name] = value;
  for (const auto& [name, value] : extra) j[name] = value;
  std::vector<std::string> flagged;
  for (const auto& [name, value] : j.items()) {
    if (name.ends_with("debiased_ece") || name.ends_with("marginal_ce")) flagged.push_back(name);
  }
  for (const auto& name : flagged) j[name + "_formula"] = "external-formula";
  return j.dump(2) + "\n";
}

std::string bins_to_csv(std::span<const BinRecord> bins) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,count,conf,acc,gap\n";
  for (const BinRecord& b : bins) {
    os << format_double(b.lo) << ',' << format_double(b.hi) << ',' << b.count << ','
       << format_double(b.conf) << ',' << format_double(b.acc) << ',' << format_double(b.gap)
       << '\n';
  }
  return os.str();
}

}  // namespace iopcal
