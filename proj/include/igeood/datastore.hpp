#pragma once

// Feature-dump directories (JSON manifest plus little-endian f32 arrays), JSON
// persistence of fitted artifacts, and seeded synthetic data generators.
//
// Dump layout:
//   manifest.json   {"version": 1, "n_samples": N, "n_classes": C, "dtype": "f32le",
//                    "logits_file": "logits.bin", "labels_file": "labels.bin",
//                    "layers": [{"name": ..., "k": k, "file": "layer_0.bin"}, ...],
//                    "inputs": {"k": d, "file": "inputs.bin"}}
//   logits.bin      N x C float32, row-major
//   labels.bin      N uint32 (optional)
//   layer_<i>.bin   N x k_i float32, row-major
//   inputs.bin      N x d float32 (optional, needed for input pre-processing)

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "igeood/nnet.hpp"
#include "igeood/scoring.hpp"
#include "igeood/stats.hpp"
#include "igeood/types.hpp"

namespace igeood {

inline constexpr int kDumpVersion = 1;

struct DumpLayer {
  std::string name;
  Matrix values;  // N x k
};

struct FeatureDump {
  std::uint32_t n_classes = 0;
  Matrix logits;  // N x C
  std::optional<std::vector<std::uint32_t>> labels;
  std::vector<DumpLayer> layers;
  std::optional<Matrix> inputs;  // N x d

  std::size_t num_samples() const noexcept { return static_cast<std::size_t>(logits.rows()); }
  /// Throws InvalidInputError when the dump carries no labels.
  LabeledLogits labeled_logits() const;
  LabeledFeatures labeled_features() const;
  std::vector<Matrix> layer_values() const;
};

/// Values are rounded to float32 on disk; a saved dump reloads to exactly those floats.
void save_dump(const FeatureDump& dump, const std::filesystem::path& dir);
FeatureDump load_dump(const std::filesystem::path& dir);

// Little-endian float32 / uint32 codecs, independent of host byte order.
std::vector<std::uint8_t> encode_f32le(const double* values, std::size_t n);
std::vector<double> decode_f32le(const std::uint8_t* bytes, std::size_t n);
std::vector<std::uint8_t> encode_u32le(const std::uint32_t* values, std::size_t n);
std::vector<std::uint32_t> decode_u32le(const std::uint8_t* bytes, std::size_t n);

// Fitted artifacts as JSON with round-trippable doubles.
void save_centroids(const CentroidSet& c, const std::filesystem::path& file);
CentroidSet load_centroids(const std::filesystem::path& file);
void save_feature_stats(const FeatureStats& s, const std::filesystem::path& file);
FeatureStats load_feature_stats(const std::filesystem::path& file);
void save_ood_stats(const OodStats& s, const std::filesystem::path& file);
OodStats load_ood_stats(const std::filesystem::path& file);
void save_mlp(const MlpParams& p, const std::filesystem::path& file);
MlpParams load_mlp(const std::filesystem::path& file);
void save_ensemble(const EnsembleWeights& w, const std::vector<std::string>& columns,
                   const std::filesystem::path& file);

struct ToySpec {
  double mu1 = 0.0;
  double sigma1 = 1.0;
  double mu2 = 0.5;
  double sigma_a = 1.0;
  double sigma_b = 3.0;
  std::size_t n = 5000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ToyData {
  std::vector<double> in;     // N(mu1, sigma1^2)
  std::vector<double> ood_a;  // N(mu2, sigma_a^2)
  std::vector<double> ood_b;  // N(mu2, sigma_b^2)
};

ToyData gen_toy1d(const ToySpec& spec);

struct BlobSpec {
  Matrix means;   // C x d
  Matrix stddev;  // C x d, independent coordinates
  std::size_t n_per_class = 0;
  std::uint64_t seed = 0;

  /// Means radius * e_c (c < d) and a common isotropic standard deviation.
  static BlobSpec on_axes(Eigen::Index d, Eigen::Index classes, double radius, double std, std::size_t n_per_class,
                          std::uint64_t seed);
  void validate() const;
};

struct Blobs {
  Matrix x;
  std::vector<std::uint32_t> labels;
};

/// Classes interleaved round-robin; exactly n_per_class samples each.
Blobs gen_blobs(const BlobSpec& spec);

}  // namespace igeood
