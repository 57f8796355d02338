#include "iopcal/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "iopcal/error.hpp"
#include "iopcal/io.hpp"

namespace iopcal {

namespace {

constexpr std::array<char, 4> kMagic = {'I', 'O', 'P', 'C'};
constexpr std::uint32_t kBinaryVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && !text.empty();
}

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    fail(ErrorKind::io, std::string("binary dataset truncated while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

bool has_binary_extension(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  return ext == ".bin" || ext == ".iopc";
}

std::vector<double> parse_number_list(std::string_view text, const char* what) {
  std::vector<double> out;
  for (std::string_view item : split(text, ',')) {
    double v = 0.0;
    if (!parse_double(item, v)) {
      fail(ErrorKind::invalid_input, std::string("miscal ") + what + ": bad number '" +
                                         std::string(item) + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::string join(std::span<const double> values) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------

void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer, bool binary) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    writer(out);
    out.flush();
    if (!out) fail(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::io, "cannot rename into " + path.string());
  }
}

void write_text_atomically(const std::filesystem::path& path, std::string_view text) {
  write_atomically(path, [&](std::ostream& out) { out << text; });
}

// ---------------------------------------------------------------------------

void LogitDataset::validate() const {
  if (labels.empty()) fail(ErrorKind::invalid_input, "dataset: need at least one sample");
  if (n_classes == 0) fail(ErrorKind::invalid_input, "dataset: n_classes must be >= 1");
  if (logits.rows() != labels.size() || logits.cols() != n_classes) {
    fail(ErrorKind::invalid_input, "dataset: logits shape does not match labels/n_classes");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) {
      fail(ErrorKind::invalid_input, "dataset: label " + std::to_string(labels[i]) +
                                         " out of range at sample " + std::to_string(i));
    }
  }
  for (double v : logits.data()) {
    if (!std::isfinite(v)) fail(ErrorKind::invalid_input, "dataset: non-finite logit");
  }
}

LogitDataset LogitDataset::subset(std::span<const std::size_t> indices) const {
  LogitDataset out;
  out.n_classes = n_classes;
  out.provenance = provenance;
  out.logits = Matrix(indices.size(), n_classes);
  out.labels.resize(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = logits.row(indices[r]);
    std::copy(src.begin(), src.end(), out.logits.row(r).begin());
    out.labels[r] = labels[indices[r]];
  }
  return out;
}

LogitDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header in " + path.string());
  ++line_no;
  const auto header = split(line, ',');
  if (header.size() < 2 || header[0] != "label") {
    throw ParseError(line_no, "header must be 'label,l0,...,l{n-1}'");
  }
  const std::size_t n = header.size() - 1;
  for (std::size_t j = 0; j < n; ++j) {
    if (header[j + 1] != "l" + std::to_string(j)) {
      throw ParseError(line_no, "unexpected header column '" + std::string(header[j + 1]) + "'");
    }
  }

  std::vector<double> values;
  std::vector<std::uint32_t> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != n + 1) {
      fail(ErrorKind::format, "line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(n + 1) + " columns, got " +
                                  std::to_string(cells.size()));
    }
    std::uint32_t label = 0;
    const auto [ptr, ec] =
        std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), label);
    if (ec != std::errc() || ptr != cells[0].data() + cells[0].size() || cells[0].empty()) {
      throw ParseError(line_no, "bad label '" + std::string(cells[0]) + "'");
    }
    if (label >= n) {
      fail(ErrorKind::invalid_input, "line " + std::to_string(line_no) + ": label " +
                                         std::to_string(label) + " >= n_classes " +
                                         std::to_string(n));
    }
    labels.push_back(label);
    for (std::size_t j = 1; j <= n; ++j) {
      double v = 0.0;
      if (!parse_double(cells[j], v)) {
        throw ParseError(line_no, "bad number '" + std::string(cells[j]) + "'");
      }
      values.push_back(v);
    }
  }

  LogitDataset data;
  data.n_classes = n;
  data.logits = Matrix(labels.size(), n, std::move(values));
  data.labels = std::move(labels);
  data.provenance = path.filename().string();
  data.validate();
  return data;
}

void save_csv(const LogitDataset& data, const std::filesystem::path& path) {
  data.validate();
  write_atomically(path, [&](std::ostream& out) {
    out << "label";
    for (std::size_t j = 0; j < data.n_classes; ++j) out << ",l" << j;
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < data.size(); ++i) {
      out << data.labels[i];
      for (double v : data.logits.row(i)) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
        out << ',';
        out.write(buf, res.ptr - buf);
      }
      out << '\n';
    }
  });
}

LogitDataset load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4) fail(ErrorKind::io, "binary dataset truncated while reading magic");
  if (magic != kMagic) fail(ErrorKind::format, "bad magic in " + path.string());
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kBinaryVersion) {
    fail(ErrorKind::unsupported_version,
         "unsupported binary dataset version " + std::to_string(version));
  }
  const auto rows = get_le<std::uint32_t>(in, "N");
  const auto cols = get_le<std::uint32_t>(in, "n");

  LogitDataset data;
  data.n_classes = cols;
  data.logits = Matrix(rows, cols);
  for (double& v : data.logits.data()) v = get_le<double>(in, "logits");
  data.labels.resize(rows);
  for (auto& label : data.labels) label = get_le<std::uint32_t>(in, "labels");
  data.provenance = path.filename().string();
  data.validate();
  return data;
}

void save_binary(const LogitDataset& data, const std::filesystem::path& path) {
  data.validate();
  write_atomically(
      path,
      [&](std::ostream& out) {
        out.write(kMagic.data(), kMagic.size());
        put_le<std::uint32_t>(out, kBinaryVersion);
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.size()));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.n_classes));
        for (double v : data.logits.data()) put_le<double>(out, v);
        for (std::uint32_t label : data.labels) put_le<std::uint32_t>(out, label);
      },
      true);
}

LogitDataset load_dataset(const std::filesystem::path& path) {
  return has_binary_extension(path) ? load_binary(path) : load_csv(path);
}

void save_dataset(const LogitDataset& data, const std::filesystem::path& path) {
  if (has_binary_extension(path)) {
    save_binary(data, path);
  } else {
    save_csv(data, path);
  }
}

// ---------------------------------------------------------------------------

Distortion parse_distortion(std::string_view text, std::size_t n_classes) {
  const std::size_t colon = text.find(':');
  if (colon == std::string_view::npos) {
    fail(ErrorKind::invalid_input, "miscal: expected KIND:VALUES, got '" + std::string(text) + "'");
  }
  const std::string_view kind = trim(text.substr(0, colon));
  const std::string_view body = trim(text.substr(colon + 1));
  if (kind == "temp") {
    const auto v = parse_number_list(body, "temp");
    if (v.size() != 1 || !(v[0] > 0.0)) {
      fail(ErrorKind::invalid_input, "miscal temp: need one positive scale");
    }
    return TempDistortion{v[0]};
  }
  if (kind == "shift") {
    auto v = parse_number_list(body, "shift");
    if (v.size() != n_classes) {
      fail(ErrorKind::invalid_input, "miscal shift: need " + std::to_string(n_classes) + " values");
    }
    return ShiftDistortion{std::move(v)};
  }
  if (kind == "affine") {
    const std::size_t semi = body.find(';');
    if (semi == std::string_view::npos) {
      fail(ErrorKind::invalid_input, "miscal affine: expected 'W...;b...'");
    }
    auto w = parse_number_list(body.substr(0, semi), "affine W");
    auto b = parse_number_list(body.substr(semi + 1), "affine b");
    if (w.size() != n_classes * n_classes || b.size() != n_classes) {
      fail(ErrorKind::invalid_input, "miscal affine: W must be n*n and b must be n values");
    }
    return AffineDistortion{Matrix(n_classes, n_classes, std::move(w)), std::move(b)};
  }
  fail(ErrorKind::invalid_input, "miscal: unknown distortion '" + std::string(kind) + "'");
}

std::string format_distortion(const Distortion& distortion) {
  if (const auto* t = std::get_if<TempDistortion>(&distortion)) {
    return "temp:" + join(std::span<const double>(&t->scale, 1));
  }
  if (const auto* s = std::get_if<ShiftDistortion>(&distortion)) return "shift:" + join(s->shift);
  const auto& a = std::get<AffineDistortion>(distortion);
  return "affine:" + join(a.w.data()) + ";" + join(a.b);
}

void SynthSpec::validate() const {
  if (n_classes < 2) fail(ErrorKind::invalid_input, "synth: need at least 2 classes");
  if (n_samples < 1) fail(ErrorKind::invalid_input, "synth: need at least 1 sample");
  if (!(dirichlet_alpha > 0.0) || !std::isfinite(dirichlet_alpha)) {
    fail(ErrorKind::invalid_input, "synth: dirichlet_alpha must be > 0");
  }
  if (const auto* t = std::get_if<TempDistortion>(&miscal)) {
    if (!(t->scale > 0.0)) fail(ErrorKind::invalid_input, "synth: temp scale must be > 0");
  } else if (const auto* s = std::get_if<ShiftDistortion>(&miscal)) {
    if (s->shift.size() != n_classes) fail(ErrorKind::invalid_input, "synth: shift length");
  } else {
    const auto& a = std::get<AffineDistortion>(miscal);
    if (a.w.rows() != n_classes || a.w.cols() != n_classes || a.b.size() != n_classes) {
      fail(ErrorKind::invalid_input, "synth: affine shape");
    }
  }
}

SynthResult synth_generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_classes;
  std::mt19937_64 rng(spec.seed);
  std::gamma_distribution<double> gamma(spec.dirichlet_alpha, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthResult result;
  result.true_probs = Matrix(spec.n_samples, n);
  result.data.n_classes = n;
  result.data.logits = Matrix(spec.n_samples, n);
  result.data.labels.resize(spec.n_samples);
  result.data.provenance = "synth(k=" + std::to_string(n) + ",N=" +
                           std::to_string(spec.n_samples) + ",alpha=" +
                           join(std::span<const double>(&spec.dirichlet_alpha, 1)) +
                           ",miscal=" + format_distortion(spec.miscal) +
                           ",seed=" + std::to_string(spec.seed) + ")";

  std::vector<double> ideal(n);
  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    auto p = result.true_probs.row(s);
    // Redraw in the (astronomically rare) event a component underflows to 0.
    while (true) {
      double sum = 0.0;
      for (double& v : p) sum += (v = gamma(rng));
      bool ok = sum > 0.0;
      for (double& v : p) {
        v /= sum;
        ok = ok && v > 0.0;
      }
      if (ok) break;
    }

    const double u = unit(rng);
    double cumulative = 0.0;
    std::uint32_t label = static_cast<std::uint32_t>(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      cumulative += p[j];
      if (u < cumulative) {
        label = static_cast<std::uint32_t>(j);
        break;
      }
    }
    result.data.labels[s] = label;

    for (std::size_t j = 0; j < n; ++j) ideal[j] = std::log(p[j]);
    auto out = result.data.logits.row(s);
    if (const auto* t = std::get_if<TempDistortion>(&spec.miscal)) {
      for (std::size_t j = 0; j < n; ++j) out[j] = t->scale * ideal[j];
    } else if (const auto* sh = std::get_if<ShiftDistortion>(&spec.miscal)) {
      for (std::size_t j = 0; j < n; ++j) out[j] = ideal[j] + sh->shift[j];
    } else {
      const auto& a = std::get<AffineDistortion>(spec.miscal);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = a.b[i];
        for (std::size_t j = 0; j < n; ++j) acc += a.w(i, j) * ideal[j];
        out[i] = acc;
      }
    }
  }
  result.data.validate();
  return result;
}

// ---------------------------------------------------------------------------

FoldSplit kfold_split(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2 || folds > n) {
    fail(ErrorKind::invalid_config, "kfold_split: need 2 <= folds <= N (folds=" +
                                        std::to_string(folds) + ", N=" + std::to_string(n) + ")");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  FoldSplit split;
  split.folds.resize(folds);
  std::size_t start = 0;
  for (std::size_t k = 0; k < folds; ++k) {
    const std::size_t size = n / folds + (k < n % folds ? 1 : 0);
    Fold& fold = split.folds[k];
    fold.validation.assign(order.begin() + static_cast<long>(start),
                           order.begin() + static_cast<long>(start + size));
    std::sort(fold.validation.begin(), fold.validation.end());
    fold.train.reserve(n - size);
    for (std::size_t i = 0; i < n; ++i) {
      if (i < start || i >= start + size) fold.train.push_back(order[i]);
    }
    std::sort(fold.train.begin(), fold.train.end());
    start += size;
  }
  return split;
}

}  // namespace iopcal
