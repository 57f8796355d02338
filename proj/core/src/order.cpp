#include "iopcal/order.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "iopcal/error.hpp"

namespace iopcal {

namespace {

void require_finite(std::span<const double> x, const char* what) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      fail(ErrorKind::invalid_input,
           std::string(what) + ": non-finite entry at index " + std::to_string(i));
    }
  }
}

}  // namespace

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::invalid_config: return "invalid-config";
    case ErrorKind::contract_violation: return "contract-violation";
    case ErrorKind::training_diverged: return "training-diverged";
    case ErrorKind::parse: return "parse";
    case ErrorKind::format: return "format";
    case ErrorKind::unsupported_version: return "unsupported-version";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

RankSignature::RankSignature(std::span<const double> x)
    : n_(x.size()), signs_(x.size() * x.size(), 0) {
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      signs_[i * n_ + j] = static_cast<std::int8_t>((x[i] > x[j]) - (x[i] < x[j]));
    }
  }
}

SortResult sort_descending(std::span<const double> x) {
  if (x.empty()) fail(ErrorKind::invalid_input, "sort_descending: empty input");
  require_finite(x, "sort_descending");

  SortResult out;
  out.perm.resize(x.size());
  std::iota(out.perm.begin(), out.perm.end(), std::size_t{0});
  std::stable_sort(out.perm.begin(), out.perm.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });

  out.sorted.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.sorted[i] = x[out.perm[i]];

  std::size_t start = 0;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    if (i == x.size() || out.sorted[i] != out.sorted[start]) {
      if (i - start >= 2) out.tie_groups.push_back({start, i});
      start = i;
    }
  }
  return out;
}

std::vector<double> reverse_cumsum(std::span<const double> w) {
  if (w.empty()) fail(ErrorKind::invalid_input, "reverse_cumsum: empty input");
  require_finite(w, "reverse_cumsum");
  std::vector<double> out(w.size());
  double acc = 0.0;
  for (std::size_t i = w.size(); i-- > 0;) {
    acc += w[i];
    out[i] = acc;
  }
  return out;
}

std::vector<double> assemble_intra_op(const SortResult& sort,
                                      std::span<const double> w,
                                      Validation validation) {
  const std::size_t n = sort.size();
  if (w.size() != n) {
    fail(ErrorKind::invalid_input, "assemble_intra_op: expected w of length " +
                                       std::to_string(n) + ", got " +
                                       std::to_string(w.size()));
  }
  if (validation == Validation::on) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const bool tie = sort.sorted[i] == sort.sorted[i + 1];
      if (tie && w[i] != 0.0) {
        fail(ErrorKind::contract_violation,
             "assemble_intra_op: w[" + std::to_string(i) + "] must be 0 on a tie");
      }
      if (!tie && !(w[i] > 0.0)) {
        fail(ErrorKind::contract_violation,
             "assemble_intra_op: w[" + std::to_string(i) +
                 "] must be positive on a strict descent");
      }
    }
  }
  const std::vector<double> cumulative = reverse_cumsum(w);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[sort.perm[i]] = cumulative[i];
  return out;
}

std::vector<double> assemble_intra_op(std::span<const double> x,
                                      std::span<const double> w,
                                      Validation validation) {
  if (w.size() != x.size()) {
    fail(ErrorKind::invalid_input, "assemble_intra_op: length mismatch");
  }
  return assemble_intra_op(sort_descending(x), w, validation);
}

bool same_ranking(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail(ErrorKind::invalid_input, "same_ranking: length mismatch");
  if (u.empty()) return true;
  // Walking u's sorted order, v must show the same pattern of strict
  // descents and equalities; transitivity covers every other pair.
  const SortResult su = sort_descending(u);
  require_finite(v, "same_ranking");
  for (std::size_t i = 0; i + 1 < su.size(); ++i) {
    const double ua = su.sorted[i], ub = su.sorted[i + 1];
    const double va = v[su.perm[i]], vb = v[su.perm[i + 1]];
    if (ua == ub) {
      if (va != vb) return false;
    } else if (!(va > vb)) {
      return false;
    }
  }
  return true;
}

}  // namespace iopcal
