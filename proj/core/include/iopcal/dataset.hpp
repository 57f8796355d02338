#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "iopcal/matrix.hpp"

namespace iopcal {

/// N x n logits with one integer label per row.
struct LogitDataset {
  Matrix logits;
  std::vector<std::uint32_t> labels;
  std::size_t n_classes = 0;
  std::string provenance;

  std::size_t size() const noexcept { return labels.size(); }

  /// Throws invalid-input unless N >= 1, shapes agree, labels < n_classes and
  /// every logit is finite.
  void validate() const;

  LogitDataset subset(std::span<const std::size_t> indices) const;
};

LogitDataset load_csv(const std::filesystem::path& path);
void save_csv(const LogitDataset& data, const std::filesystem::path& path);

/// Little-endian "IOPC" container: magic, u32 version (1), u32 N, u32 n,
/// N*n float64 logits row-major, N u32 labels.
LogitDataset load_binary(const std::filesystem::path& path);
void save_binary(const LogitDataset& data, const std::filesystem::path& path);

/// Dispatches on extension: ".bin" / ".iopc" are binary, anything else CSV.
LogitDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const LogitDataset& data, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic miscalibrated classifiers

struct TempDistortion {
  double scale = 1.0;  // logits are multiplied by this
};
struct ShiftDistortion {
  std::vector<double> shift;  // added to every logit row
};
struct AffineDistortion {
  Matrix w;
  std::vector<double> b;
};
using Distortion = std::variant<TempDistortion, ShiftDistortion, AffineDistortion>;

/// Parses "temp:S", "shift:v0,v1,..." or "affine:w00,w01,...;b0,b1,..." (W row-major).
Distortion parse_distortion(std::string_view text, std::size_t n_classes);
std::string format_distortion(const Distortion& distortion);

struct SynthSpec {
  std::size_t n_classes = 10;
  std::size_t n_samples = 1000;
  double dirichlet_alpha = 0.5;
  Distortion miscal = TempDistortion{1.0};
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthResult {
  LogitDataset data;
  Matrix true_probs;  // the per-sample class distributions labels were drawn from
};

/// Draws p ~ Dirichlet(alpha), y ~ Categorical(p), sets logits = log p and
/// applies the distortion. Deterministic given the seed.
SynthResult synth_generate(const SynthSpec& spec);

// ---------------------------------------------------------------------------
// K-fold splitting

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

struct FoldSplit {
  std::vector<Fold> folds;
};

/// Shuffles 0..n-1 and cuts it into `folds` contiguous validation blocks whose
/// sizes differ by at most one.
FoldSplit kfold_split(std::size_t n, std::size_t folds, std::uint64_t seed);

}  // namespace iopcal
