#pragma once

// Independent reference implementations used only by tests. Each one is
// written the slow, obvious way and shares no code with the library paths
// it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "iopcal/calibrators.hpp"
#include "iopcal/dataset.hpp"
#include "iopcal/matrix.hpp"
#include "iopcal/training.hpp"

namespace iopcal::oracle {

/// Pairwise sign comparison: true iff sign(u_i-u_j) == sign(v_i-v_j) for all i, j.
inline bool pairwise_same_ranking(const std::vector<double>& u, const std::vector<double>& v) {
  for (std::size_t i = 0; i < u.size(); ++i) {
    for (std::size_t j = 0; j < u.size(); ++j) {
      const int su = (u[i] > u[j]) - (u[i] < u[j]);
      const int sv = (v[i] > v[j]) - (v[i] < v[j]);
      if (su != sv) return false;
    }
  }
  return true;
}

/// Descending order by repeated selection of the largest remaining value,
/// preferring the lowest index on equality.
inline std::vector<std::size_t> selection_order(const std::vector<double>& x) {
  std::vector<bool> used(x.size(), false);
  std::vector<std::size_t> order;
  for (std::size_t step = 0; step < x.size(); ++step) {
    std::size_t best = x.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (used[i]) continue;
      if (best == x.size() || x[i] > x[best]) best = i;
    }
    used[best] = true;
    order.push_back(best);
  }
  return order;
}

/// Sort, reverse-cumsum with an explicit double loop, then unsort.
inline std::vector<double> assemble(const std::vector<double>& x, const std::vector<double>& w) {
  const auto order = selection_order(x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = x.size(); j-- > i;) s += w[j];
    out[order[i]] = s;
  }
  return out;
}

/// Composite trapezoid rule with `steps` panels.
inline double trapezoid(const std::function<double(double)>& f, double a, double b,
                        std::size_t steps) {
  const double h = (b - a) / static_cast<double>(steps);
  double sum = 0.5 * (f(a) + f(b));
  for (std::size_t i = 1; i < steps; ++i) sum += f(a + h * static_cast<double>(i));
  return sum * h;
}

/// Central finite-difference gradient of objective().
inline std::vector<double> finite_difference_grad(const CalibratorModel& model,
                                                  const LogitDataset& data, double lambda,
                                                  double h = 1e-5) {
  std::vector<double> g(model.params().size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto plus = model.params();
    auto minus = model.params();
    plus[i] += h;
    minus[i] -= h;
    g[i] = (objective(model.with_params(plus), data, lambda) -
            objective(model.with_params(minus), data, lambda)) /
           (2.0 * h);
  }
  return g;
}

/// Relative error ||a-b|| / max(||a||, ||b||, floor).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b,
                             double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// --- metric oracles: bins scanned one at a time, samples filtered per bin ---

inline bool in_bin(double v, std::size_t m, std::size_t bins) {
  const double lo = static_cast<double>(m) / static_cast<double>(bins);
  const double hi = static_cast<double>(m + 1) / static_cast<double>(bins);
  return v >= lo && (v < hi || (m + 1 == bins && v <= 1.0));
}

inline std::size_t top_index(const double* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

inline double ece(const Matrix& p, const std::vector<std::uint32_t>& y, std::size_t bins) {
  const std::size_t n = p.rows(), k = p.cols();
  double total = 0.0;
  for (std::size_t m = 0; m < bins; ++m) {
    std::size_t count = 0;
    double conf = 0.0, hits = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = &p.data()[i * k];
      const std::size_t pred = top_index(row, k);
      if (!in_bin(row[pred], m, bins)) continue;
      ++count;
      conf += row[pred];
      hits += pred == y[i] ? 1.0 : 0.0;
    }
    if (count == 0) continue;
    const double c = static_cast<double>(count);
    total += (c / static_cast<double>(n)) * std::abs(hits / c - conf / c);
  }
  return total;
}

inline double classwise_ece(const Matrix& p, const std::vector<std::uint32_t>& y,
                            std::size_t bins) {
  const std::size_t n = p.rows(), k = p.cols();
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double per_class = 0.0;
    for (std::size_t m = 0; m < bins; ++m) {
      std::size_t count = 0;
      double conf = 0.0, hits = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!in_bin(p(i, j), m, bins)) continue;
        ++count;
        conf += p(i, j);
        hits += y[i] == j ? 1.0 : 0.0;
      }
      if (count == 0) continue;
      const double c = static_cast<double>(count);
      per_class += (c / static_cast<double>(n)) * std::abs(hits / c - conf / c);
    }
    total += per_class;
  }
  return total / static_cast<double>(k);
}

inline double brier(const Matrix& p, const std::vector<std::uint32_t>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double target = y[i] == j ? 1.0 : 0.0;
      total += (p(i, j) - target) * (p(i, j) - target);
    }
  }
  return total / (static_cast<double>(p.rows()) * static_cast<double>(p.cols()));
}

inline double nll(const Matrix& p, const std::vector<std::uint32_t>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) total -= std::log(std::max(p(i, y[i]), 1e-12));
  return total / static_cast<double>(p.rows());
}

// --- random generators ---

/// Random vector with entries in [-scale, scale]; with probability 1/2 some
/// coordinates are copied onto others to force exact ties.
inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 5.0,
                                         bool allow_ties = true) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> x(n);
  for (double& v : x) v = dist(rng);
  if (allow_ties && n >= 2 && rng() % 2 == 0) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t copies = 1 + rng() % std::max<std::size_t>(1, n / 3);
    for (std::size_t c = 0; c < copies; ++c) x[pick(rng)] = x[pick(rng)];
  }
  return x;
}

inline std::vector<double> random_params(std::size_t count, std::mt19937_64& rng,
                                         double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> p(count);
  for (double& v : p) v = dist(rng);
  return p;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

/// (Px)_i = x_{perm[i]}
inline std::vector<double> permute(const std::vector<double>& x,
                                   const std::vector<std::size_t>& perm) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[perm[i]];
  return out;
}

/// Random probability matrix (rows drawn as softmax of random logits, with a
/// few exactly one-hot rows) plus labels.
inline std::pair<Matrix, std::vector<std::uint32_t>> random_probs(std::size_t n, std::size_t k,
                                                                  std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 2.0);
  Matrix p(n, k);
  std::vector<std::uint32_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits(k);
    for (double& v : logits) v = normal(rng);
    auto s = softmax(logits);
    if (rng() % 10 == 0) {
      std::fill(s.begin(), s.end(), 0.0);
      s[rng() % k] = 1.0;
    }
    std::copy(s.begin(), s.end(), p.row(i).begin());
    y[i] = static_cast<std::uint32_t>(rng() % k);
  }
  return {std::move(p), std::move(y)};
}

/// Small random dataset for gradient checks.
inline LogitDataset random_dataset(std::size_t n_samples, std::size_t k, std::mt19937_64& rng,
                                   double scale = 3.0) {
  LogitDataset d;
  d.n_classes = k;
  d.logits = Matrix(n_samples, k);
  d.labels.resize(n_samples);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (std::size_t i = 0; i < n_samples; ++i) {
    for (double& v : d.logits.row(i)) v = dist(rng);
    d.labels[i] = static_cast<std::uint32_t>(rng() % k);
  }
  return d;
}

/// A model of the given method with random architecture-compatible params.
inline CalibratorModel random_model(Method method, std::size_t k, std::mt19937_64& rng) {
  MlpSpec arch;
  if (method == Method::diag) {
    arch.widths = {1, 4, 3, 1};
  } else {
    arch.widths = {k, 5, k};
  }
  CalibratorModel base = initial_model(method, k, arch, rng());
  std::vector<double> p = random_params(base.params().size(), rng, 0.8);
  if (method == Method::ts) p[0] = 0.3 + std::abs(p[0]) * 3.0;
  return base.with_params(std::move(p));
}

}  // namespace iopcal::oracle
