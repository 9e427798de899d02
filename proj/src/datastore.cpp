#include "igeood/datastore.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "igeood/error.hpp"

namespace igeood {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";

// ---- binary files ----------------------------------------------------------

void write_bytes(const fs::path& file, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(FormatErrorCode::io_failure, file.string(), "cannot open for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError(FormatErrorCode::io_failure, file.string(), "write failed");
}

std::vector<std::uint8_t> read_bytes(const fs::path& file, std::uintmax_t expected, const std::string& what) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec)) {
    throw FormatError(FormatErrorCode::file_missing, file.string(), what + " file not found");
  }
  const auto actual = fs::file_size(file, ec);
  if (ec) throw FormatError(FormatErrorCode::io_failure, file.string(), "cannot stat: " + ec.message());
  if (actual != expected) {
    throw FormatError(FormatErrorCode::size_mismatch, file.string(),
                      what + ": expected " + std::to_string(expected) + " bytes, found " + std::to_string(actual));
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(actual));
  std::ifstream is(file, std::ios::binary);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw FormatError(FormatErrorCode::io_failure, file.string(), "read failed");
  return bytes;
}

Matrix matrix_from_f32(const std::vector<std::uint8_t>& bytes, Eigen::Index rows, Eigen::Index cols) {
  const auto values = decode_f32le(bytes.data(), static_cast<std::size_t>(rows * cols));
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

std::vector<std::uint8_t> f32_of(const Matrix& m) { return encode_f32le(m.data(), static_cast<std::size_t>(m.size())); }

// ---- manifest fields -------------------------------------------------------

const json& field(const json& j, const char* key, const std::string& file) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(FormatErrorCode::missing_field, file, std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

std::int64_t int_field(const json& j, const char* key, const std::string& file) {
  const json& v = field(j, key, file);
  if (!v.is_number_integer()) {
    throw FormatError(FormatErrorCode::wrong_type, file, std::string("field '") + key + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

std::string string_field(const json& j, const char* key, const std::string& file) {
  const json& v = field(j, key, file);
  if (!v.is_string()) {
    throw FormatError(FormatErrorCode::wrong_type, file, std::string("field '") + key + "' must be a string");
  }
  return v.get<std::string>();
}

std::string file_name_field(const json& j, const char* key, const std::string& file) {
  std::string name = string_field(j, key, file);
  if (name.empty() || name == "." || name == ".." || name.find('/') != std::string::npos ||
      name.find('\\') != std::string::npos) {
    throw FormatError(FormatErrorCode::invalid_path, file,
                      std::string("field '") + key + "' must be a plain file name, got '" + name + "'");
  }
  return name;
}

std::int64_t dimension_field(const json& j, const char* key, std::int64_t min, const std::string& file) {
  const std::int64_t v = int_field(j, key, file);
  if (v < min) {
    throw FormatError(FormatErrorCode::invalid_dimension, file,
                      std::string("field '") + key + "' must be >= " + std::to_string(min) + ", got " + std::to_string(v));
  }
  return v;
}

// ---- artifact JSON helpers -------------------------------------------------

json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

template <class M>
json matrix_to_json(const M& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

template <class M>
M matrix_from_json(const json& j, const std::string& file) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto cols = rows.empty() ? std::size_t{0} : rows.front().size();
  M m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw FormatError(FormatErrorCode::invalid_dimension, file, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

void write_json(const json& j, const fs::path& file) {
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw FormatError(FormatErrorCode::io_failure, file.string(), "cannot open for writing");
  os << j.dump(1) << '\n';
  if (!os) throw FormatError(FormatErrorCode::io_failure, file.string(), "write failed");
}

json read_json(const fs::path& file, FormatErrorCode missing) {
  std::ifstream is(file);
  if (!is) throw FormatError(missing, file.string(), "cannot open");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError(FormatErrorCode::manifest_parse, file.string(), e.what());
  }
}

json read_artifact(const fs::path& file, const char* kind) {
  json j = read_json(file, FormatErrorCode::file_missing);
  if (string_field(j, "kind", file.string()) != kind) {
    throw FormatError(FormatErrorCode::wrong_type, file.string(), std::string("expected a '") + kind + "' artifact");
  }
  return j;
}

// Converts JSON type errors raised while decoding an artifact into FormatError.
template <class Fn>
auto decode(const fs::path& file, Fn fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorCode::wrong_type, file.string(), e.what());
  } catch (const InvalidInputError& e) {
    throw FormatError(FormatErrorCode::invalid_dimension, file.string(), e.what());
  }
}

}  // namespace

// ---- FeatureDump -------------------------------------------------------------

LabeledLogits FeatureDump::labeled_logits() const {
  if (!labels) throw InvalidInputError("dump has no labels");
  LabeledLogits out{logits, *labels};
  out.validate();
  return out;
}

LabeledFeatures FeatureDump::labeled_features() const {
  if (!labels) throw InvalidInputError("dump has no labels");
  LabeledFeatures out{layer_values(), *labels, n_classes};
  out.validate();
  return out;
}

std::vector<Matrix> FeatureDump::layer_values() const {
  std::vector<Matrix> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l.values);
  return out;
}

std::vector<std::uint8_t> encode_f32le(const double* values, std::size_t n) {
  std::vector<std::uint8_t> out(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) out[4 * i + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

std::vector<double> decode_f32le(const std::uint8_t* bytes, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + static_cast<std::size_t>(b)]) << (8 * b);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

std::vector<std::uint8_t> encode_u32le(const std::uint32_t* values, std::size_t n) {
  std::vector<std::uint8_t> out(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int b = 0; b < 4; ++b) out[4 * i + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(values[i] >> (8 * b));
  }
  return out;
}

std::vector<std::uint32_t> decode_u32le(const std::uint8_t* bytes, std::size_t n) {
  std::vector<std::uint32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[4 * i + static_cast<std::size_t>(b)]) << (8 * b);
    out[i] = v;
  }
  return out;
}

void save_dump(const FeatureDump& dump, const fs::path& dir) {
  const Eigen::Index n = dump.logits.rows();
  if (n < 1) throw InvalidInputError("save_dump: need at least one sample");
  if (dump.n_classes < 2 || dump.logits.cols() != static_cast<Eigen::Index>(dump.n_classes)) {
    throw ShapeError("save_dump: logits width must equal n_classes (>= 2)");
  }
  if (dump.labels) {
    if (dump.labels->size() != static_cast<std::size_t>(n)) throw ShapeError("save_dump: label count != n_samples");
    for (auto y : *dump.labels) {
      if (y >= dump.n_classes) throw InvalidInputError("save_dump: label out of range");
    }
  }
  for (const auto& l : dump.layers) {
    if (l.values.rows() != n || l.values.cols() < 1) throw ShapeError("save_dump: layer '" + l.name + "' has wrong shape");
  }
  if (dump.inputs && (dump.inputs->rows() != n || dump.inputs->cols() < 1)) {
    throw ShapeError("save_dump: inputs have wrong shape");
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError(FormatErrorCode::io_failure, dir.string(), "cannot create directory: " + ec.message());

  json manifest = {{"version", kDumpVersion},
                   {"n_samples", n},
                   {"n_classes", dump.n_classes},
                   {"dtype", "f32le"},
                   {"logits_file", "logits.bin"}};
  write_bytes(dir / "logits.bin", f32_of(dump.logits));
  if (dump.labels) {
    manifest["labels_file"] = "labels.bin";
    write_bytes(dir / "labels.bin", encode_u32le(dump.labels->data(), dump.labels->size()));
  }
  json layers = json::array();
  for (std::size_t i = 0; i < dump.layers.size(); ++i) {
    const std::string file = "layer_" + std::to_string(i) + ".bin";
    const std::string name = dump.layers[i].name.empty() ? "layer_" + std::to_string(i) : dump.layers[i].name;
    layers.push_back({{"name", name}, {"k", dump.layers[i].values.cols()}, {"file", file}});
    write_bytes(dir / file, f32_of(dump.layers[i].values));
  }
  manifest["layers"] = layers;
  if (dump.inputs) {
    manifest["inputs"] = {{"k", dump.inputs->cols()}, {"file", "inputs.bin"}};
    write_bytes(dir / "inputs.bin", f32_of(*dump.inputs));
  }
  write_json(manifest, dir / kManifest);
}

FeatureDump load_dump(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifest;
  const std::string mf = manifest_path.string();
  if (!fs::is_regular_file(manifest_path)) {
    throw FormatError(FormatErrorCode::manifest_missing, mf, "no manifest.json in " + dir.string());
  }
  const json m = read_json(manifest_path, FormatErrorCode::manifest_missing);
  if (!m.is_object()) throw FormatError(FormatErrorCode::wrong_type, mf, "manifest must be a JSON object");

  if (int_field(m, "version", mf) != kDumpVersion) {
    throw FormatError(FormatErrorCode::unsupported_version, mf,
                      "version " + m.at("version").dump() + " is not supported (expected 1)");
  }
  const std::string dtype = string_field(m, "dtype", mf);
  if (dtype != "f32le") throw FormatError(FormatErrorCode::unsupported_dtype, mf, "dtype '" + dtype + "' is not supported");
  const auto n = static_cast<Eigen::Index>(dimension_field(m, "n_samples", 1, mf));
  const auto c = static_cast<Eigen::Index>(dimension_field(m, "n_classes", 2, mf));

  FeatureDump dump;
  dump.n_classes = static_cast<std::uint32_t>(c);
  const fs::path logits_file = dir / file_name_field(m, "logits_file", mf);
  dump.logits = matrix_from_f32(read_bytes(logits_file, static_cast<std::uintmax_t>(n * c * 4), "logits"), n, c);

  if (m.contains("labels_file") && !m.at("labels_file").is_null()) {
    const fs::path labels_file = dir / file_name_field(m, "labels_file", mf);
    const auto bytes = read_bytes(labels_file, static_cast<std::uintmax_t>(n * 4), "labels");
    auto labels = decode_u32le(bytes.data(), static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= dump.n_classes) {
        throw FormatError(FormatErrorCode::label_out_of_range, labels_file.string(),
                          "label " + std::to_string(labels[i]) + " at row " + std::to_string(i) + " >= n_classes " +
                              std::to_string(c));
      }
    }
    dump.labels = std::move(labels);
  }

  const json& layers = field(m, "layers", mf);
  if (!layers.is_array()) throw FormatError(FormatErrorCode::wrong_type, mf, "field 'layers' must be an array");
  for (const json& entry : layers) {
    const std::string name = string_field(entry, "name", mf);
    const auto k = static_cast<Eigen::Index>(dimension_field(entry, "k", 1, mf));
    const fs::path file = dir / file_name_field(entry, "file", mf);
    dump.layers.push_back({name, matrix_from_f32(read_bytes(file, static_cast<std::uintmax_t>(n * k * 4), "layer '" + name + "'"), n, k)});
  }

  if (m.contains("inputs") && !m.at("inputs").is_null()) {
    const json& inputs = m.at("inputs");
    if (!inputs.is_object()) throw FormatError(FormatErrorCode::wrong_type, mf, "field 'inputs' must be an object");
    const auto d = static_cast<Eigen::Index>(dimension_field(inputs, "k", 1, mf));
    const fs::path file = dir / file_name_field(inputs, "file", mf);
    dump.inputs = matrix_from_f32(read_bytes(file, static_cast<std::uintmax_t>(n * d * 4), "inputs"), n, d);
  }
  return dump;
}

// ---- artifacts ---------------------------------------------------------------

void save_centroids(const CentroidSet& c, const fs::path& file) {
  write_json({{"kind", "centroids"},
              {"fit_distance", c.fit_distance == FitDistance::fisher_rao ? "fisher_rao" : "kl"},
              {"final_loss", c.final_loss},
              {"loss_history", c.loss_history},
              {"centroids", matrix_to_json(c.centroids)}},
             file);
}

CentroidSet load_centroids(const fs::path& file) {
  const json j = read_artifact(file, "centroids");
  return decode(file, [&] {
    CentroidSet c;
    c.centroids = matrix_from_json<Matrix>(field(j, "centroids", file.string()), file.string());
    if (c.centroids.rows() < 2 || c.centroids.rows() != c.centroids.cols()) {
      throw FormatError(FormatErrorCode::invalid_dimension, file.string(), "centroids must be C x C with C >= 2");
    }
    const std::string dist = string_field(j, "fit_distance", file.string());
    if (dist != "fisher_rao" && dist != "kl") {
      throw FormatError(FormatErrorCode::wrong_type, file.string(), "unknown fit_distance '" + dist + "'");
    }
    c.fit_distance = dist == "kl" ? FitDistance::kl : FitDistance::fisher_rao;
    c.final_loss = field(j, "final_loss", file.string()).get<double>();
    c.loss_history = field(j, "loss_history", file.string()).get<std::vector<double>>();
    return c;
  });
}

void save_feature_stats(const FeatureStats& s, const fs::path& file) {
  json layers = json::array();
  for (const auto& l : s.layers) {
    layers.push_back({{"class_means", matrix_to_json(l.class_means)}, {"tied_sigma", to_json(l.tied_sigma)}});
  }
  write_json({{"kind", "feature_stats"}, {"layers", layers}}, file);
}

FeatureStats load_feature_stats(const fs::path& file) {
  const json j = read_artifact(file, "feature_stats");
  return decode(file, [&] {
    FeatureStats s;
    for (const json& l : field(j, "layers", file.string())) {
      LayerStats ls{matrix_from_json<Matrix>(field(l, "class_means", file.string()), file.string()),
                    vector_from_json(field(l, "tied_sigma", file.string()))};
      if (ls.class_means.cols() != ls.tied_sigma.size() || (ls.tied_sigma.array() <= 0.0).any()) {
        throw FormatError(FormatErrorCode::invalid_dimension, file.string(), "inconsistent layer statistics");
      }
      s.layers.push_back(std::move(ls));
    }
    return s;
  });
}

void save_ood_stats(const OodStats& s, const fs::path& file) {
  json layers = json::array();
  for (const auto& l : s.layers) layers.push_back({{"mu", to_json(l.mu)}, {"sigma", to_json(l.sigma)}});
  write_json({{"kind", "ood_stats"}, {"layers", layers}}, file);
}

OodStats load_ood_stats(const fs::path& file) {
  const json j = read_artifact(file, "ood_stats");
  return decode(file, [&] {
    OodStats s;
    for (const json& l : field(j, "layers", file.string())) {
      OodLayerStats ls{vector_from_json(field(l, "mu", file.string())), vector_from_json(field(l, "sigma", file.string()))};
      if (ls.mu.size() != ls.sigma.size() || (ls.sigma.array() <= 0.0).any()) {
        throw FormatError(FormatErrorCode::invalid_dimension, file.string(), "inconsistent OOD statistics");
      }
      s.layers.push_back(std::move(ls));
    }
    return s;
  });
}

void save_mlp(const MlpParams& p, const fs::path& file) {
  json layers = json::array();
  for (const auto& l : p.layers) layers.push_back({{"weight", matrix_to_json(l.weight)}, {"bias", to_json(l.bias)}});
  write_json({{"kind", "mlp"}, {"activation", to_string(p.activation)}, {"layer_sizes", p.layer_sizes}, {"layers", layers}},
             file);
}

MlpParams load_mlp(const fs::path& file) {
  const json j = read_artifact(file, "mlp");
  return decode(file, [&] {
    MlpParams p;
    const std::string act = string_field(j, "activation", file.string());
    if (act != "tanh" && act != "softplus") {
      throw FormatError(FormatErrorCode::wrong_type, file.string(), "unknown activation '" + act + "'");
    }
    p.activation = parse_activation(act);
    p.layer_sizes = field(j, "layer_sizes", file.string()).get<std::vector<int>>();
    for (const json& l : field(j, "layers", file.string())) {
      p.layers.push_back({matrix_from_json<Eigen::MatrixXd>(field(l, "weight", file.string()), file.string()),
                          vector_from_json(field(l, "bias", file.string()))});
    }
    p.validate();
    return p;
  });
}

void save_ensemble(const EnsembleWeights& w, const std::vector<std::string>& columns, const fs::path& file) {
  write_json({{"kind", "ensemble"},
              {"columns", columns},
              {"alpha", to_json(w.alpha)},
              {"intercept", w.intercept},
              {"fitted_iterations", w.fitted_iterations}},
             file);
}

// ---- generators ------------------------------------------------------------

void ToySpec::validate() const {
  for (double s : {sigma1, sigma_a, sigma_b}) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("toy: standard deviations must be > 0");
  }
  if (!std::isfinite(mu1) || !std::isfinite(mu2)) throw ConfigError("toy: means must be finite");
}

ToyData gen_toy1d(const ToySpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](double mu, double sigma) {
    std::vector<double> v(spec.n);
    for (double& x : v) x = mu + sigma * normal(rng);
    return v;
  };
  ToyData out;
  out.in = draw(spec.mu1, spec.sigma1);
  out.ood_a = draw(spec.mu2, spec.sigma_a);
  out.ood_b = draw(spec.mu2, spec.sigma_b);
  return out;
}

BlobSpec BlobSpec::on_axes(Eigen::Index d, Eigen::Index classes, double radius, double std, std::size_t n_per_class,
                           std::uint64_t seed) {
  if (classes > d) throw ConfigError("BlobSpec::on_axes: need d >= number of classes");
  BlobSpec spec;
  spec.means = Matrix::Zero(classes, d);
  for (Eigen::Index c = 0; c < classes; ++c) spec.means(c, c) = radius;
  spec.stddev = Matrix::Constant(classes, d, std);
  spec.n_per_class = n_per_class;
  spec.seed = seed;
  return spec;
}

void BlobSpec::validate() const {
  if (means.rows() < 2) throw ConfigError("blobs: need at least 2 classes");
  if (means.cols() < 1) throw ConfigError("blobs: dimension must be >= 1");
  if (stddev.rows() != means.rows() || stddev.cols() != means.cols()) {
    throw ConfigError("blobs: stddev shape must match means");
  }
  if (!means.allFinite() || !stddev.allFinite() || (stddev.array() <= 0.0).any()) {
    throw ConfigError("blobs: means must be finite and standard deviations > 0");
  }
  if (n_per_class < 1) throw ConfigError("blobs: n_per_class must be >= 1");
}

Blobs gen_blobs(const BlobSpec& spec) {
  spec.validate();
  const Eigen::Index classes = spec.means.rows();
  const Eigen::Index d = spec.means.cols();
  const auto total = static_cast<Eigen::Index>(spec.n_per_class) * classes;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Blobs out;
  out.x.resize(total, d);
  out.labels.resize(static_cast<std::size_t>(total));
  for (Eigen::Index i = 0; i < total; ++i) {
    const Eigen::Index c = i % classes;
    out.labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(c);
    for (Eigen::Index j = 0; j < d; ++j) out.x(i, j) = spec.means(c, j) + spec.stddev(c, j) * normal(rng);
  }
  return out;
}

}  // namespace igeood
