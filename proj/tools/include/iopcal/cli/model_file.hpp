#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iopcal/calibrators.hpp"
#include "iopcal/training.hpp"

namespace iopcal::cli {

struct TrainMeta {
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::size_t folds = 1;
  double final_nll = 0.0;
};

/// On-disk calibrator: one architecture, a representative parameter vector
/// and the parameters of every ensemble member.
struct ModelFile {
  Method method = Method::ts;
  std::size_t n_classes = 0;
  MlpSpec net;
  std::size_t quadrature_points = kDefaultQuadraturePoints;
  std::vector<double> params;
  std::vector<std::vector<double>> ensemble;
  TrainMeta meta;

  CalibratorModel model() const;
  /// Averages the ensemble members in probability space.
  Ensemble ensemble_model() const;
};

/// Builds a ModelFile whose params are the first member's.
ModelFile make_model_file(const std::vector<CalibratorModel>& members, const TrainMeta& meta);

std::string to_json(const ModelFile& file);
ModelFile model_from_json(const std::string& text);

void save_model(const ModelFile& file, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace iopcal::cli
