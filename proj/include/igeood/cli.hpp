#pragma once

// Experiment runner behind the `igeood` executable: config loading, the four
// detector settings, report/score/histogram writers, the 1-D toy comparison and
// the synthetic fixture generator.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "igeood/eval.hpp"
#include "igeood/scoring.hpp"
#include "igeood/stats.hpp"

namespace igeood {

enum class Setting { black_box, grey_box, white_box, white_box_plus };

const char* to_string(Setting s);
Setting parse_setting(const std::string& name);

/// JSON experiment description. Relative paths are resolved against the config file's directory.
///
///   {"setting": "white_box", "train": "train", "test_in": "test_in",
///    "test_out": {"easy": "test_out_easy"}, "validation_in": "val_in",
///    "validation_out": "val_out", "model": "model.json",
///    "centroids": {"learning_rate": 0.1, "epochs": 100, "full_batch": true, "batch_size": 128},
///    "tune": {"temperatures": [1, 2, 5], "epsilons": [0, 0.001]},
///    "fgsm_eps": 0.05, "seed": 0}
struct ExperimentConfig {
  Setting setting = Setting::black_box;
  std::filesystem::path train;
  std::filesystem::path test_in;
  std::vector<std::pair<std::string, std::filesystem::path>> test_out;
  std::optional<std::filesystem::path> validation_in;
  std::optional<std::filesystem::path> validation_out;
  std::optional<std::filesystem::path> model;
  CentroidFitConfig centroids;
  TuneGrid tune;
  double fgsm_eps = 0.05;
  std::uint64_t seed = 0;

  /// Throws ConfigError on malformed JSON, unknown keys, bad values or missing paths.
  static ExperimentConfig load(const std::filesystem::path& file);
  void validate() const;
};

struct ReportRow {
  Setting setting = Setting::black_box;
  std::string scorer;
  std::string ood_set;
  EvalReport metrics;
  double temperature = 1.0;
  double eps = 0.0;
};

/// Raw scores of the test populations, one column per reported scorer.
struct PopulationScores {
  std::string population;
  ScoreTable table;
};

struct RunResult {
  std::vector<ReportRow> rows;
  std::vector<PopulationScores> scores;
  std::string validation_ood;  // "validation_out", "fgsm" or "none"
  double centroid_final_loss = 0.0;
  std::optional<std::pair<std::vector<std::string>, EnsembleWeights>> ensemble;
};

RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Doubles are written with 17 significant digits.
std::string format_double(double v);
void write_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& file);
void write_report_json(const ExperimentConfig& cfg, const RunResult& result, const std::filesystem::path& file);
void write_scores_csv(const std::vector<PopulationScores>& scores, const std::filesystem::path& file);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::pair<std::string, std::vector<std::size_t>>> counts;
};

/// Equal-width bins over the pooled range of every population.
Histogram histogram(const std::vector<std::pair<std::string, std::vector<double>>>& populations, int bins);

/// Reads a scores CSV ("population,index,<column>...") and returns one column per population.
std::vector<std::pair<std::string, std::vector<double>>> read_score_column(const std::filesystem::path& file,
                                                                           const std::string& column);
void write_histogram_csv(const Histogram& h, const std::filesystem::path& file);

struct ToyRow {
  std::string score;
  std::string ood_set;
  Orientation orientation;
  double auroc;
};

struct ToyResult {
  std::vector<ToyRow> rows;
  double mu_prime_a = 0.0, sigma_prime_a = 0.0;
  double mu_prime_b = 0.0, sigma_prime_b = 0.0;
  /// Populations "in", "ood_a", "ood_b" with columns mahalanobis, fr_ood_a, fr_ood_b.
  std::vector<PopulationScores> scores;
};

struct ToySpec;
/// FR score rho((x, sigma1), (mu', sigma')) with (mu', sigma') fitted on an independent
/// pseudo-OOD draw; Mahalanobis score |x - mu1| / sigma1.
ToyResult run_toy(const ToySpec& spec);

struct FixtureSpec {
  std::uint64_t seed = 7;
  std::size_t n_train_per_class = 250;
  std::size_t n_test_per_class = 150;
  std::size_t n_val_per_class = 100;
  std::size_t n_ood = 400;
};

/// Writes train/test/validation dumps, model.json and one config per setting.
void generate_fixture(const std::filesystem::path& dir, const FixtureSpec& spec);

/// Entry point of the executable; returns the process exit code
/// (0 ok, 1 config error, 2 data error, 3 fit error).
int cli_main(int argc, const char* const* argv);

}  // namespace igeood
