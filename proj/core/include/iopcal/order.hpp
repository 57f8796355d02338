#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace iopcal {

/// Half-open range [begin, end) of positions in a sorted vector holding
/// equal values. Only runs of length >= 2 are recorded.
struct TieGroup {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const TieGroup&, const TieGroup&) = default;
};

/// Descending sort of one vector. perm[i] is the original index of the
/// i-th largest entry; equal entries keep ascending original index order.
struct SortResult {
  std::vector<std::size_t> perm;
  std::vector<double> sorted;
  std::vector<TieGroup> tie_groups;

  std::size_t size() const noexcept { return perm.size(); }
};

/// Pairwise sign matrix, entry (i, j) = sign(x_i - x_j), stored row-major.
class RankSignature {
 public:
  explicit RankSignature(std::span<const double> x);

  std::size_t size() const noexcept { return n_; }
  int sign(std::size_t i, std::size_t j) const { return signs_[i * n_ + j]; }

  friend bool operator==(const RankSignature&, const RankSignature&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::int8_t> signs_;
};

enum class Validation { off, on };

SortResult sort_descending(std::span<const double> x);

/// out[i] = sum_{j >= i} w[j], accumulated right to left.
std::vector<double> reverse_cumsum(std::span<const double> w);

/// Scatters reverse_cumsum(w) back through the sorting permutation of x.
/// With validation on, w must be zero on tie positions and non-negative on
/// every position but the last.
std::vector<double> assemble_intra_op(std::span<const double> x,
                                      std::span<const double> w,
                                      Validation validation = Validation::off);
std::vector<double> assemble_intra_op(const SortResult& sort,
                                      std::span<const double> w,
                                      Validation validation = Validation::off);

/// True iff sign(u_i - u_j) == sign(v_i - v_j) for every pair.
bool same_ranking(std::span<const double> u, std::span<const double> v);

}  // namespace iopcal
