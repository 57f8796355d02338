#include "iopcal/cli/model_file.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "iopcal/error.hpp"
#include "iopcal/io.hpp"

namespace iopcal::cli {

using nlohmann::json;

CalibratorModel ModelFile::model() const {
  return CalibratorModel(method, n_classes, net, quadrature_points, params);
}

Ensemble ModelFile::ensemble_model() const {
  if (ensemble.empty()) return Ensemble({model()});
  std::vector<CalibratorModel> members;
  members.reserve(ensemble.size());
  for (const auto& p : ensemble) {
    members.emplace_back(method, n_classes, net, quadrature_points, p);
  }
  return Ensemble(std::move(members));
}

ModelFile make_model_file(const std::vector<CalibratorModel>& members, const TrainMeta& meta) {
  if (members.empty()) fail(ErrorKind::invalid_input, "model file: no ensemble members");
  const CalibratorModel& first = members.front();
  ModelFile file;
  file.method = first.method();
  file.n_classes = first.n_classes();
  file.net = first.net();
  file.quadrature_points = first.quadrature_points();
  file.params = first.params();
  for (const auto& m : members) file.ensemble.push_back(m.params());
  file.meta = meta;
  return file;
}

std::string to_json(const ModelFile& file) {
  json spec = {
      {"widths", file.net.widths},
      {"positivity_mask", file.net.positive_outputs},
      {"quadrature_points", file.quadrature_points},
  };
  json doc = {
      {"method", std::string(to_string(file.method))},
      {"n_classes", file.n_classes},
      {"spec", spec},
      {"params", file.params},
      {"ensemble", file.ensemble},
      {"train_meta",
       {{"seed", file.meta.seed},
        {"lambda", file.meta.lambda},
        {"folds", file.meta.folds},
        {"final_nll", file.meta.final_nll}}},
  };
  return doc.dump(2) + "\n";
}

ModelFile model_from_json(const std::string& text) {
  ModelFile file;
  try {
    const json doc = json::parse(text);
    const auto method = parse_method(doc.at("method").get<std::string>());
    if (!method) fail(ErrorKind::format, "model file: unknown method");
    file.method = *method;
    file.n_classes = doc.at("n_classes").get<std::size_t>();
    const json& spec = doc.at("spec");
    file.net.widths = spec.at("widths").get<std::vector<std::size_t>>();
    file.net.positive_outputs = spec.at("positivity_mask").get<std::vector<bool>>();
    file.quadrature_points = spec.value("quadrature_points", kDefaultQuadraturePoints);
    file.params = doc.at("params").get<std::vector<double>>();
    file.ensemble = doc.value("ensemble", std::vector<std::vector<double>>{});
    if (doc.contains("train_meta")) {
      const json& meta = doc.at("train_meta");
      file.meta.seed = meta.value("seed", std::uint64_t{0});
      file.meta.lambda = meta.value("lambda", 0.0);
      file.meta.folds = meta.value("folds", std::size_t{1});
      file.meta.final_nll = meta.value("final_nll", 0.0);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("model file: ") + e.what());
  }
  // Constructing the models validates every parameter vector against the spec.
  file.model();
  file.ensemble_model();
  return file;
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
  write_text_atomically(path, to_json(file));
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open model file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return model_from_json(buffer.str());
}

}  // namespace iopcal::cli
