#include "igeood/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "igeood/error.hpp"

namespace igeood {

namespace {

std::vector<double> normalized(std::span<const double> scores, Orientation o, const char* what) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidInputError(std::string(what) + ": non-finite score");
    out.push_back(normalize(s, o));
  }
  return out;
}

void require_nonempty(std::span<const double> in, std::span<const double> out, const char* what) {
  if (in.empty() || out.empty()) throw InvalidInputError(std::string(what) + ": both score sets must be non-empty");
}

// Normalized threshold: the m-th largest score, m the smallest count reaching the target rate.
double normalized_threshold(std::vector<double> scores, double target_tpr) {
  const std::size_t n = scores.size();
  auto m = static_cast<std::size_t>(std::ceil(target_tpr * static_cast<double>(n)));
  m = std::clamp<std::size_t>(m, 1, n);
  while (m > 1 && static_cast<double>(m - 1) / static_cast<double>(n) >= target_tpr) --m;
  while (m < n && static_cast<double>(m) / static_cast<double>(n) < target_tpr) ++m;
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(m - 1), scores.end(),
                   std::greater<>());
  return scores[m - 1];
}

}  // namespace

std::vector<double> default_temperatures() { return {1, 2, 5, 10, 20, 50, 100, 200, 500, 1000}; }

std::vector<double> default_epsilons() {
  std::vector<double> eps(21);
  for (int i = 0; i <= 20; ++i) eps[static_cast<std::size_t>(i)] = 0.002 * i / 20.0;
  return eps;
}

void TuneGrid::validate() const {
  if (temperatures.empty() || epsilons.empty()) throw ConfigError("tune grid must have at least one T and one eps");
  for (double t : temperatures) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("tune grid temperatures must be > 0");
  }
  for (double e : epsilons) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError("tune grid epsilons must be >= 0");
  }
}

double calibrate_threshold(std::span<const double> in_scores, Orientation orientation, double target_tpr) {
  if (in_scores.size() < kMinCalibrationScores) {
    throw CalibrationError("calibrate_threshold: need at least " + std::to_string(kMinCalibrationScores) +
                           " in-distribution scores, got " + std::to_string(in_scores.size()));
  }
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) throw CalibrationError("calibrate_threshold: target TPR must be in (0, 1]");
  const double t = normalized_threshold(normalized(in_scores, orientation, "calibrate_threshold"), target_tpr);
  return normalize(t, orientation);
}

int detect(double score, const DetectorConfig& cfg) {
  return normalize(score, cfg.orientation) <= normalize(cfg.delta, cfg.orientation) ? 1 : 0;
}

double tnr_at_tpr(std::span<const double> in_scores, std::span<const double> out_scores, Orientation orientation,
                  double tpr) {
  require_nonempty(in_scores, out_scores, "tnr_at_tpr");
  const double delta = normalize(calibrate_threshold(in_scores, orientation, tpr), orientation);
  const auto out = normalized(out_scores, orientation, "tnr_at_tpr");
  const auto flagged = std::count_if(out.begin(), out.end(), [delta](double s) { return s <= delta; });
  return static_cast<double>(flagged) / static_cast<double>(out.size());
}

double auroc(std::span<const double> in_scores, std::span<const double> out_scores, Orientation orientation) {
  require_nonempty(in_scores, out_scores, "auroc");
  const auto in = normalized(in_scores, orientation, "auroc");
  auto out = normalized(out_scores, orientation, "auroc");
  std::sort(out.begin(), out.end());
  // Twice the Mann-Whitney count, kept in integers.
  std::uint64_t twice = 0;
  for (double s : in) {
    const auto lo = std::lower_bound(out.begin(), out.end(), s);
    const auto hi = std::upper_bound(lo, out.end(), s);
    twice += 2 * static_cast<std::uint64_t>(lo - out.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(in.size()) * static_cast<double>(out.size()));
}

double aupr(std::span<const double> in_scores, std::span<const double> out_scores, Orientation orientation) {
  require_nonempty(in_scores, out_scores, "aupr");
  auto in = normalized(in_scores, orientation, "aupr");
  auto out = normalized(out_scores, orientation, "aupr");
  std::sort(in.begin(), in.end(), std::greater<>());
  std::sort(out.begin(), out.end(), std::greater<>());
  const auto n_in = static_cast<double>(in.size());

  std::size_t i = 0, j = 0;
  double area = 0.0;
  double prev_recall = 0.0;
  while (i < in.size() || j < out.size()) {
    const double t = j >= out.size() || (i < in.size() && in[i] >= out[j]) ? in[i] : out[j];
    while (i < in.size() && in[i] >= t) ++i;
    while (j < out.size() && out[j] >= t) ++j;
    const double recall = static_cast<double>(i) / n_in;
    if (recall > prev_recall) {
      area += (recall - prev_recall) * static_cast<double>(i) / static_cast<double>(i + j);
      prev_recall = recall;
    }
  }
  return area;
}

EvalReport evaluate(std::span<const double> in_scores, std::span<const double> out_scores, Orientation orientation) {
  require_nonempty(in_scores, out_scores, "evaluate");
  EvalReport r;
  r.delta = calibrate_threshold(in_scores, orientation);
  r.tnr_at_tpr95 = tnr_at_tpr(in_scores, out_scores, orientation);
  r.auroc = auroc(in_scores, out_scores, orientation);
  r.aupr = aupr(in_scores, out_scores, orientation);
  r.n_in = in_scores.size();
  r.n_out = out_scores.size();
  return r;
}

GridResult grid_search(const TuneGrid& grid, const std::function<double(double, double)>& objective) {
  grid.validate();
  bool have = false;
  GridResult best;
  for (double eps : grid.epsilons) {
    for (double t : grid.temperatures) {
      const double v = objective(t, eps);
      if (!std::isfinite(v)) throw InvalidInputError("grid_search: objective is not finite");
      const bool better = !have || v > best.objective ||
                          (v == best.objective && (eps < best.eps || (eps == best.eps && t < best.temperature)));
      if (better) {
        best = {t, eps, v};
        have = true;
      }
    }
  }
  return best;
}

}  // namespace igeood
