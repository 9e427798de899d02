#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "igeood/error.hpp"
#include "igeood/eval.hpp"

using namespace igeood;

namespace {

std::vector<double> range(int lo, int hi) {
  std::vector<double> v;
  for (int i = lo; i <= hi; ++i) v.push_back(i);
  return v;
}

// Independent oracles over higher_is_in scores.
double brute_auroc(const std::vector<double>& in, const std::vector<double>& out) {
  double s = 0.0;
  for (double a : in) {
    for (double b : out) s += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return s / static_cast<double>(in.size() * out.size());
}

double brute_aupr(const std::vector<double>& in, const std::vector<double>& out) {
  std::set<double, std::greater<>> thresholds(in.begin(), in.end());
  thresholds.insert(out.begin(), out.end());
  double area = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    const double tp = static_cast<double>(std::count_if(in.begin(), in.end(), [t](double s) { return s >= t; }));
    const double fp = static_cast<double>(std::count_if(out.begin(), out.end(), [t](double s) { return s >= t; }));
    const double recall = tp / static_cast<double>(in.size());
    if (tp + fp > 0) area += tp / (tp + fp) * (recall - prev_recall);
    prev_recall = recall;
  }
  return area;
}

double brute_tnr(const std::vector<double>& in, const std::vector<double>& out) {
  double best = -INFINITY;
  for (double d : in) {
    const double frac = static_cast<double>(std::count_if(in.begin(), in.end(), [d](double s) { return s >= d; })) /
                        static_cast<double>(in.size());
    if (frac >= 0.95) best = std::max(best, d);
  }
  return static_cast<double>(std::count_if(out.begin(), out.end(), [best](double s) { return s <= best; })) /
         static_cast<double>(out.size());
}

std::vector<double> draw(std::mt19937_64& rng, std::size_t n, double mean, bool discrete) {
  std::normal_distribution<double> d(mean, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = discrete ? std::round(d(rng) * 2.0) : d(rng);
  return v;
}

}  // namespace

TEST(Calibrate, Examples) {
  const auto s = range(1, 20);
  EXPECT_EQ(calibrate_threshold(s, Orientation::higher_is_in), 2.0);
  EXPECT_EQ(calibrate_threshold(s, Orientation::lower_is_in), 19.0);
  EXPECT_EQ(calibrate_threshold(s, Orientation::higher_is_in, 1.0), 1.0);
  EXPECT_EQ(calibrate_threshold(std::vector<double>(25, 3.5), Orientation::higher_is_in), 3.5);
  const auto s100 = range(1, 100);
  EXPECT_EQ(calibrate_threshold(s100, Orientation::higher_is_in), 6.0);
}

TEST(Calibrate, Errors) {
  EXPECT_THROW(calibrate_threshold(range(1, 19), Orientation::higher_is_in), CalibrationError);
  EXPECT_THROW(calibrate_threshold(range(1, 20), Orientation::higher_is_in, 0.0), CalibrationError);
  EXPECT_THROW(calibrate_threshold(range(1, 20), Orientation::higher_is_in, 1.5), CalibrationError);
  auto bad = range(1, 20);
  bad[3] = NAN;
  EXPECT_THROW(calibrate_threshold(bad, Orientation::higher_is_in), InvalidInputError);
}

TEST(Calibrate, AchievesTargetRate) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    const auto in = draw(rng, 20 + static_cast<std::size_t>(k) * 7, 0.0, k % 2 == 0);
    for (auto o : {Orientation::higher_is_in, Orientation::lower_is_in}) {
      const double d = calibrate_threshold(in, o);
      const auto kept = std::count_if(in.begin(), in.end(), [&](double s) { return detect(s, {d, 1, 0, o}) == 0 || s == d; });
      EXPECT_GE(static_cast<double>(kept) / static_cast<double>(in.size()), 0.95);
    }
  }
}

TEST(Detect, BoundaryIsOod) {
  EXPECT_EQ(detect(2.0, {2.0, 1, 0, Orientation::higher_is_in}), 1);
  EXPECT_EQ(detect(2.0001, {2.0, 1, 0, Orientation::higher_is_in}), 0);
  EXPECT_EQ(detect(1.9, {2.0, 1, 0, Orientation::higher_is_in}), 1);
  EXPECT_EQ(detect(2.0, {2.0, 1, 0, Orientation::lower_is_in}), 1);
  EXPECT_EQ(detect(2.1, {2.0, 1, 0, Orientation::lower_is_in}), 1);
  EXPECT_EQ(detect(1.9, {2.0, 1, 0, Orientation::lower_is_in}), 0);
}

TEST(Tnr, Examples) {
  const auto in = range(1, 20);
  EXPECT_EQ(tnr_at_tpr(in, std::vector<double>{0, 1, 2, 3}, Orientation::higher_is_in), 0.75);
  EXPECT_EQ(tnr_at_tpr(in, std::vector<double>{30, 40}, Orientation::higher_is_in), 0.0);
  EXPECT_EQ(tnr_at_tpr(in, std::vector<double>{30, 40}, Orientation::lower_is_in), 1.0);
  EXPECT_THROW(tnr_at_tpr(in, std::vector<double>{}, Orientation::higher_is_in), InvalidInputError);
}

TEST(Auroc, Examples) {
  EXPECT_EQ(auroc(std::vector<double>{2, 0}, std::vector<double>{1, -1}, Orientation::higher_is_in), 0.75);
  EXPECT_EQ(auroc(std::vector<double>{2, 0}, std::vector<double>{1, -1}, Orientation::lower_is_in), 0.25);
  EXPECT_EQ(auroc(std::vector<double>{1, 1}, std::vector<double>{1}, Orientation::higher_is_in), 0.5);
  EXPECT_EQ(auroc(std::vector<double>{5}, std::vector<double>{1, 2}, Orientation::higher_is_in), 1.0);
}

TEST(Aupr, Examples) {
  EXPECT_NEAR(aupr(std::vector<double>{2, 0}, std::vector<double>{1, -1}, Orientation::higher_is_in), 5.0 / 6.0, 1e-15);
  EXPECT_EQ(aupr(std::vector<double>{5, 4}, std::vector<double>{1, 2}, Orientation::higher_is_in), 1.0);
  EXPECT_NEAR(aupr(std::vector<double>{1}, std::vector<double>{1}, Orientation::higher_is_in), 0.5, 1e-15);
}

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 60; ++k) {
    const bool discrete = k % 3 == 0;
    const auto in = draw(rng, 20 + static_cast<std::size_t>(k), 1.0, discrete);
    const auto out = draw(rng, 5 + static_cast<std::size_t>(k) * 2, 0.0, discrete);
    EXPECT_NEAR(auroc(in, out, Orientation::higher_is_in), brute_auroc(in, out), 1e-12);
    EXPECT_NEAR(aupr(in, out, Orientation::higher_is_in), brute_aupr(in, out), 1e-12);
    EXPECT_EQ(tnr_at_tpr(in, out, Orientation::higher_is_in), brute_tnr(in, out));

    std::vector<double> nin(in.size()), nout(out.size());
    std::transform(in.begin(), in.end(), nin.begin(), [](double s) { return -s; });
    std::transform(out.begin(), out.end(), nout.begin(), [](double s) { return -s; });
    EXPECT_EQ(auroc(nin, nout, Orientation::lower_is_in), auroc(in, out, Orientation::higher_is_in));
    EXPECT_EQ(aupr(nin, nout, Orientation::lower_is_in), aupr(in, out, Orientation::higher_is_in));
    EXPECT_EQ(tnr_at_tpr(nin, nout, Orientation::lower_is_in), tnr_at_tpr(in, out, Orientation::higher_is_in));
  }
}

TEST(Metrics, MonotoneTransformInvariance) {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 20; ++k) {
    const auto in = draw(rng, 50, 0.7, k % 2 == 0);
    const auto out = draw(rng, 40, 0.0, k % 2 == 0);
    std::vector<double> tin(in.size()), tout(out.size());
    auto f = [](double s) { return std::exp(0.5 * s) + 3.0; };
    std::transform(in.begin(), in.end(), tin.begin(), f);
    std::transform(out.begin(), out.end(), tout.begin(), f);
    const auto a = evaluate(in, out, Orientation::higher_is_in);
    const auto b = evaluate(tin, tout, Orientation::higher_is_in);
    EXPECT_EQ(a.auroc, b.auroc);
    EXPECT_NEAR(a.aupr, b.aupr, 1e-12);
    EXPECT_EQ(a.tnr_at_tpr95, b.tnr_at_tpr95);
    EXPECT_EQ(f(a.delta), b.delta);
  }
}

TEST(Metrics, SwapSymmetry) {
  std::mt19937_64 rng(29);
  for (int k = 0; k < 20; ++k) {
    const auto in = draw(rng, 30, 0.5, k % 2 == 0);
    const auto out = draw(rng, 25, 0.0, k % 2 == 0);
    EXPECT_NEAR(auroc(in, out, Orientation::higher_is_in) + auroc(out, in, Orientation::higher_is_in), 1.0, 1e-15);
  }
}

TEST(Metrics, RandomScoresGiveChanceLevel) {
  std::mt19937_64 rng(31);
  const auto in = draw(rng, 10000, 0.0, false);
  const auto out = draw(rng, 10000, 0.0, false);
  EXPECT_NEAR(auroc(in, out, Orientation::higher_is_in), 0.5, 0.02);
  EXPECT_NEAR(aupr(in, out, Orientation::higher_is_in), 0.5, 0.02);
  EXPECT_NEAR(tnr_at_tpr(in, out, Orientation::higher_is_in), 0.05, 0.015);
}

TEST(Evaluate, FillsReport) {
  const auto in = range(1, 20);
  const std::vector<double> out{0, 1, 2, 3};
  const auto r = evaluate(in, out, Orientation::higher_is_in);
  EXPECT_EQ(r.delta, 2.0);
  EXPECT_EQ(r.tnr_at_tpr95, 0.75);
  EXPECT_EQ(r.n_in, 20u);
  EXPECT_EQ(r.n_out, 4u);
  EXPECT_NEAR(r.auroc, brute_auroc(in, out), 1e-15);
}

TEST(GridSearch, PicksMaximumAndBreaksTies) {
  TuneGrid grid{{1, 2, 5}, {0, 0.001, 0.002}};
  auto r = grid_search(grid, [](double t, double e) { return -(t - 2) * (t - 2) - (e - 0.001) * (e - 0.001); });
  EXPECT_EQ(r.temperature, 2.0);
  EXPECT_EQ(r.eps, 0.001);
  r = grid_search(grid, [](double, double) { return 1.0; });
  EXPECT_EQ(r.temperature, 1.0);
  EXPECT_EQ(r.eps, 0.0);
  r = grid_search(grid, [](double t, double e) { return e > 0 && t > 1 ? 2.0 : 1.0; });
  EXPECT_EQ(r.temperature, 2.0);
  EXPECT_EQ(r.eps, 0.001);
  EXPECT_EQ(r.objective, 2.0);
  EXPECT_THROW(grid_search(grid, [](double, double) { return NAN; }), InvalidInputError);
}

TEST(GridSearch, DefaultsAndValidation) {
  const auto eps = default_epsilons();
  ASSERT_EQ(eps.size(), 21u);
  EXPECT_EQ(eps.front(), 0.0);
  EXPECT_NEAR(eps.back(), 0.002, 1e-18);
  EXPECT_NEAR(eps[1] - eps[0], 0.0001, 1e-18);
  const auto ts = default_temperatures();
  EXPECT_EQ(ts.front(), 1.0);
  EXPECT_EQ(ts.back(), 1000.0);
  EXPECT_TRUE(std::is_sorted(ts.begin(), ts.end()));
  EXPECT_NO_THROW(TuneGrid{}.validate());
  EXPECT_THROW((TuneGrid{{}, {0}}.validate()), ConfigError);
  EXPECT_THROW((TuneGrid{{0}, {0}}.validate()), ConfigError);
  EXPECT_THROW((TuneGrid{{1}, {-0.1}}.validate()), ConfigError);
}
