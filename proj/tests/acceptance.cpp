// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "igeood/cli.hpp"
#include "igeood/datastore.hpp"
#include "igeood/eval.hpp"
#include "igeood/geometry.hpp"
#include "igeood/nnet.hpp"
#include "igeood/scoring.hpp"
#include "igeood/stats.hpp"

#ifndef IGEOOD_FIXTURE_DIR
#error "IGEOOD_FIXTURE_DIR must point at the bundled pipeline fixture"
#endif

namespace fs = std::filesystem;
using namespace igeood;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

ProbVector random_simplex(std::mt19937_64& rng, int c) {
  std::exponential_distribution<double> e(1.0);
  Vector p(c);
  for (int i = 0; i < c; ++i) p[i] = e(rng);
  return ProbVector(p / p.sum());
}

fs::path scratch_path(const std::string& name) { return fs::temp_directory_path() / ("igeood_acceptance_" + name); }

fs::path scratch(const std::string& name) {
  const fs::path p = scratch_path(name);
  fs::remove_all(p);
  return p;
}

// ---- 1 -----------------------------------------------------------------------

Outcome criterion_1() {
  Outcome o;
  Vector a(2), b(2);
  a << 1.0, 0.0;
  b << 0.5, 0.5;
  const double d1 = fr_softmax(ProbVector(a), ProbVector(b));
  const double d2 = fr_gauss_1d({0.0, 1.0}, {0.0, std::numbers::e});
  const double d3 = fr_gauss_1d({std::sqrt(2.0), 1.0}, {0.0, 1.0});
  const double w3 = 2.0 * std::sqrt(2.0) * std::log((1.0 + std::sqrt(5.0)) / 2.0);
  o.check(rel_err(d1, std::numbers::pi / 2) < 1e-9, "fr_softmax " + fmt(d1));
  o.check(rel_err(d2, std::sqrt(2.0)) < 1e-9, "equal-mean 1-D " + fmt(d2));
  o.check(rel_err(d3, w3) < 1e-9, "golden-ratio 1-D " + fmt(d3));
  o.detail = o.pass ? "3 closed forms within 1e-9 relative" : o.detail;
  return o;
}

// ---- 2 -----------------------------------------------------------------------

Outcome criterion_2() {
  Outcome o;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(2, 10);
  double worst_tri = -1.0, worst_sym = 0.0, worst_scale = 0.0, worst_local = 0.0;
  double worst_kl = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    const int c = dim(rng);
    const auto p = random_simplex(rng, c), q = random_simplex(rng, c), r = random_simplex(rng, c);
    const double pq = fr_softmax(p, q), qp = fr_softmax(q, p), pr = fr_softmax(p, r), qr = fr_softmax(q, r);
    o.check(pq >= 0.0 && pq <= std::numbers::pi, "range");
    worst_sym = std::max(worst_sym, std::abs(pq - qp));
    worst_tri = std::max(worst_tri, pr - (pq + qr));
    worst_kl = std::min(worst_kl, kl_softmax(p, q) / 2.0 - (1.0 - std::cos(pq / 2.0)));
  }
  std::uniform_real_distribution<double> mu(-5.0, 5.0), sig(0.1, 5.0), scale(0.01, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const Gauss1D a{mu(rng), sig(rng)}, b{mu(rng), sig(rng)};
    const double c = scale(rng);
    const double base = fr_gauss_1d(a, b);
    const double scaled = fr_gauss_1d({c * a.mu, c * a.sigma}, {c * b.mu, c * b.sigma});
    worst_scale = std::max(worst_scale, std::abs(scaled - base));
  }
  for (double s : {0.5, 1.0, 3.0}) {
    const double h = 1e-4 * s;
    worst_local = std::max(worst_local, std::abs(fr_gauss_1d({0.0, s}, {h, s}) * s / h - 1.0));
  }
  o.check(worst_sym < 1e-12, "symmetry " + fmt(worst_sym));
  o.check(worst_tri <= 1e-9, "triangle " + fmt(worst_tri));
  o.check(worst_scale < 1e-10, "scale isometry " + fmt(worst_scale));
  o.check(worst_local < 1e-3, "local Mahalanobis " + fmt(worst_local));
  o.check(worst_kl >= -1e-12, "KL-FR inequality " + fmt(worst_kl));
  if (o.pass) {
    o.detail = "symmetry " + fmt(worst_sym) + ", triangle excess " + fmt(worst_tri) + ", isometry " +
               fmt(worst_scale) + ", local " + fmt(worst_local) + ", KL slack " + fmt(worst_kl);
  }
  return o;
}

// ---- 3 -----------------------------------------------------------------------

// Normwise, with a 1e-4 floor: for C = 2 the summed distance is constant along the arc
// between the two centroids, so the exact gradient there is zero.
double max_rel(const Vector& analytic, const Vector& numeric) {
  const double scale = std::max({numeric.cwiseAbs().maxCoeff(), analytic.cwiseAbs().maxCoeff(), 1e-4});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

Outcome criterion_3() {
  Outcome o;
  double worst_input = 0.0, worst_param = 0.0;
  constexpr double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    MlpParams net = init_mlp({2, 3, 2}, Activation::tanh, seed);
    std::mt19937_64 rng(100 + seed);
    std::normal_distribution<double> n01(0.0, 1.0);

    CentroidSet centroids;
    centroids.centroids = Matrix(2, 2);
    for (int i = 0; i < 4; ++i) centroids.centroids(i / 2, i % 2) = n01(rng);
    Vector x(2);
    x << n01(rng), n01(rng);
    for (Aggregation agg : {Aggregation::sum, Aggregation::min}) {
      const Vector g = grad_input_fr0(net, x, centroids, 2.0, agg);
      Vector fd(2);
      for (int j = 0; j < 2; ++j) {
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        fd[j] = (score_fr0(forward(net, xp), centroids, 2.0, agg) - score_fr0(forward(net, xm), centroids, 2.0, agg)) /
                (2 * h);
      }
      worst_input = std::max(worst_input, max_rel(g, fd));
    }

    Matrix xs(6, 2);
    std::vector<std::uint32_t> ys(6);
    for (int i = 0; i < 6; ++i) {
      xs(i, 0) = n01(rng);
      xs(i, 1) = n01(rng);
      ys[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i % 2);
    }
    std::vector<DenseLayer> grad;
    loss_and_gradient(net, xs, ys, 1e-3, &grad);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const auto& W = net.layers[l].weight;
      Vector a(W.size() + net.layers[l].bias.size()), fd(a.size());
      Eigen::Index k = 0;
      auto probe = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = loss_and_gradient(net, xs, ys, 1e-3, nullptr);
        param = saved - h;
        const double down = loss_and_gradient(net, xs, ys, 1e-3, nullptr);
        param = saved;
        a[k] = analytic;
        fd[k] = (up - down) / (2 * h);
        ++k;
      };
      for (Eigen::Index r = 0; r < W.rows(); ++r) {
        for (Eigen::Index c = 0; c < W.cols(); ++c) probe(net.layers[l].weight(r, c), grad[l].weight(r, c));
      }
      for (Eigen::Index r = 0; r < net.layers[l].bias.size(); ++r) probe(net.layers[l].bias[r], grad[l].bias[r]);
      worst_param = std::max(worst_param, max_rel(a, fd));
    }
  }
  o.check(worst_input < 1e-4, "input gradient " + fmt(worst_input));
  o.check(worst_param < 1e-4, "parameter gradient " + fmt(worst_param));
  if (o.pass) o.detail = "max relative error input " + fmt(worst_input) + ", parameters " + fmt(worst_param);
  return o;
}

// ---- 4 -----------------------------------------------------------------------

double trapezoid_auroc(const std::vector<double>& in, const std::vector<double>& out) {
  std::vector<double> thresholds(in);
  thresholds.insert(thresholds.end(), out.begin(), out.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double area = 0.0, tpr_prev = 0.0, fpr_prev = 0.0;
  for (double t : thresholds) {
    const double tpr = static_cast<double>(std::count_if(in.begin(), in.end(), [&](double s) { return s >= t; })) /
                       static_cast<double>(in.size());
    const double fpr = static_cast<double>(std::count_if(out.begin(), out.end(), [&](double s) { return s >= t; })) /
                       static_cast<double>(out.size());
    area += (fpr - fpr_prev) * (tpr + tpr_prev) / 2.0;
    tpr_prev = tpr;
    fpr_prev = fpr;
  }
  return area;
}

double scan_tnr(const std::vector<double>& in, const std::vector<double>& out) {
  double best = -std::numeric_limits<double>::infinity();
  for (double c : in) {
    const auto kept = std::count_if(in.begin(), in.end(), [&](double s) { return s >= c; });
    if (static_cast<double>(kept) / static_cast<double>(in.size()) >= 0.95) best = std::max(best, c);
  }
  return static_cast<double>(std::count_if(out.begin(), out.end(), [&](double s) { return s <= best; })) /
         static_cast<double>(out.size());
}

double enumerate_aupr(const std::vector<double>& in, const std::vector<double>& out) {
  std::vector<double> thresholds(in);
  thresholds.insert(thresholds.end(), out.begin(), out.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double area = 0.0, recall_prev = 0.0;
  for (double t : thresholds) {
    const double tp = static_cast<double>(std::count_if(in.begin(), in.end(), [&](double s) { return s >= t; }));
    const double fp = static_cast<double>(std::count_if(out.begin(), out.end(), [&](double s) { return s >= t; }));
    const double recall = tp / static_cast<double>(in.size());
    area += (recall - recall_prev) * (tp / (tp + fp));
    recall_prev = recall;
  }
  return area;
}

Outcome criterion_4() {
  Outcome o;
  double worst_auroc = 0.0, worst_aupr = 0.0;
  int tnr_mismatch = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> size(20, 120), value(-15, 15);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> in(static_cast<std::size_t>(size(rng))), out(static_cast<std::size_t>(size(rng)));
    const bool integer = seed % 2 == 0;
    for (auto& v : in) v = integer ? value(rng) + 3 : n01(rng) + 0.7;
    for (auto& v : out) v = integer ? value(rng) : n01(rng);
    worst_auroc = std::max(worst_auroc, std::abs(auroc(in, out, Orientation::higher_is_in) - trapezoid_auroc(in, out)));
    worst_aupr = std::max(worst_aupr, std::abs(aupr(in, out, Orientation::higher_is_in) - enumerate_aupr(in, out)));
    if (integer && tnr_at_tpr(in, out, Orientation::higher_is_in) != scan_tnr(in, out)) ++tnr_mismatch;
  }
  o.check(worst_auroc < 1e-9, "auroc " + fmt(worst_auroc));
  o.check(worst_aupr < 1e-9, "aupr " + fmt(worst_aupr));
  o.check(tnr_mismatch == 0, std::to_string(tnr_mismatch) + " tnr mismatches");
  if (o.pass) o.detail = "100 sets, auroc diff " + fmt(worst_auroc) + ", aupr diff " + fmt(worst_aupr) + ", tnr exact";
  return o;
}

// ---- 5 -----------------------------------------------------------------------

// Monte Carlo oracle (n = 1e5, independent generator) for the default toy setup.
constexpr double kGoldenFrOodB = 0.2301;
constexpr double kGoldenMahaOodB = 0.7974;

Outcome criterion_5() {
  Outcome o;
  const ToyResult r = run_toy(ToySpec{});
  auto find = [&](const std::string& score, const std::string& set) {
    for (const auto& row : r.rows) {
      if (row.score == score && row.ood_set == set) return row.auroc;
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const double fr_a = find("fr", "ood_a"), maha_a = find("mahalanobis", "ood_a");
  const double fr_b = find("fr", "ood_b"), maha_b = find("mahalanobis", "ood_b");
  o.check(std::abs(fr_b - kGoldenFrOodB) <= 0.02, "FR OOD II " + fmt(fr_b) + " vs golden " + fmt(kGoldenFrOodB));
  o.check(std::abs(maha_b - kGoldenMahaOodB) <= 0.02,
          "Mahalanobis OOD II " + fmt(maha_b) + " vs golden " + fmt(kGoldenMahaOodB));
  o.check(std::abs(fr_a - maha_a) <= 0.05, "OOD I gap " + fmt(fr_a - maha_a));
  o.check(fr_b - maha_b >= 0.05, "FR - Mahalanobis on OOD II = " + fmt(fr_b - maha_b) + " < 0.05");
  if (o.pass) o.detail = "OOD II FR " + fmt(fr_b) + ", Mahalanobis " + fmt(maha_b);
  return o;
}

// ---- 6, 7 --------------------------------------------------------------------

struct BlobPipeline {
  MlpParams model;
  Matrix train_logits;
  std::vector<std::uint32_t> train_labels;
  Matrix test_logits;
};

const BlobPipeline& blob_pipeline() {
  static const BlobPipeline p = [] {
    BlobPipeline b;
    const Blobs train_set = gen_blobs(BlobSpec::on_axes(8, 4, 4.0, 1.0, 2000, 11));
    const Blobs test_set = gen_blobs(BlobSpec::on_axes(8, 4, 4.0, 1.0, 500, 12));
    TrainConfig tc;
    tc.seed = 11;
    tc.epochs = 20;
    b.model = train(train_set.x, train_set.labels, tc);
    b.train_logits = forward_batch(b.model, train_set.x).logits;
    b.train_labels = train_set.labels;
    b.test_logits = forward_batch(b.model, test_set.x).logits;
    return b;
  }();
  return p;
}

Outcome criterion_6() {
  Outcome o;
  const BlobPipeline& p = blob_pipeline();
  const CentroidSet c = fit_centroids({p.train_logits, p.train_labels});
  std::size_t agree = 0;
  for (Eigen::Index i = 0; i < p.test_logits.rows(); ++i) {
    Eigen::Index argmax = 0;
    p.test_logits.row(i).maxCoeff(&argmax);
    if (classify_fr(p.test_logits.row(i).transpose(), c, 1.0) == static_cast<std::uint32_t>(argmax)) ++agree;
  }
  const double rate = static_cast<double>(agree) / static_cast<double>(p.test_logits.rows());
  o.check(p.test_logits.rows() == 2000, "held-out size");
  o.check(rate >= 0.99, "agreement " + fmt(rate));
  if (o.pass) o.detail = "agreement " + fmt(rate) + " on " + std::to_string(p.test_logits.rows()) + " samples";
  return o;
}

Outcome criterion_7() {
  Outcome o;
  const BlobPipeline& p = blob_pipeline();
  CentroidFitConfig cfg;
  cfg.seed = 5;
  cfg.full_batch = false;
  cfg.batch_size = 128;
  const CentroidSet a = fit_centroids({p.train_logits, p.train_labels}, cfg);
  const CentroidSet b = fit_centroids({p.train_logits, p.train_labels}, cfg);
  const double ratio = a.loss_history.back() / a.loss_history.front();
  o.check(a.loss_history.size() == 101, "history length " + std::to_string(a.loss_history.size()));
  o.check(ratio <= 0.10, "final/initial " + fmt(ratio));
  o.check(a.centroids == b.centroids && a.loss_history == b.loss_history, "refit differs");
  if (o.pass) o.detail = "final/initial objective " + fmt(ratio) + ", refit identical";
  return o;
}

// ---- 8 -----------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"igeood"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool schema_valid(const fs::path& dir, std::string& why) {
  const std::string csv = read_file(dir / "report.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  if (line != "setting,scorer,ood_set,tnr_at_tpr95,auroc,aupr,delta,temperature,eps,n_in,n_out") {
    why = "bad csv header";
    return false;
  }
  const auto j = nlohmann::json::parse(read_file(dir / "report.json"));
  for (const char* key : {"setting", "seed", "rows", "validation_ood"}) {
    if (!j.contains(key)) {
      why = std::string("report.json lacks ") + key;
      return false;
    }
  }
  std::size_t n = 0;
  for (const auto& row : j.at("rows")) {
    ++n;
    for (const char* key : {"tnr_at_tpr95", "auroc", "aupr"}) {
      const double v = row.at(key).get<double>();
      if (!(v >= 0.0 && v <= 1.0)) {
        why = std::string(key) + " out of range";
        return false;
      }
    }
    if (!std::isfinite(row.at("delta").get<double>())) {
      why = "non-finite delta";
      return false;
    }
  }
  std::size_t csv_rows = 0;
  while (std::getline(lines, line)) csv_rows += line.empty() ? 0 : 1;
  if (n == 0 || n != csv_rows) {
    why = "row count mismatch";
    return false;
  }
  return true;
}

double easy_tnr(const fs::path& dir, const std::string& scorer) {
  const auto j = nlohmann::json::parse(read_file(dir / "report.json"));
  for (const auto& row : j.at("rows")) {
    if (row.at("scorer") == scorer && row.at("ood_set") == "easy") return row.at("tnr_at_tpr95").get<double>();
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Outcome criterion_8() {
  Outcome o;
  const fs::path fixture(IGEOOD_FIXTURE_DIR);
  const std::pair<const char*, const char*> runs[] = {{"black_box", "fr0_sum"},
                                                      {"grey_box", "fr0_sum"},
                                                      {"grey_box_eps0", "fr0_sum"},
                                                      {"white_box", "igeood"},
                                                      {"white_box_plus", "igeood_plus"}};
  std::vector<double> tnr;
  for (const auto& [name, scorer] : runs) {
    const fs::path out = scratch(name);
    const int rc = run_cli({"run", "--config", (fixture / (std::string(name) + ".json")).string(), "--out", out.string()});
    o.check(rc == 0, std::string(name) + " exit " + std::to_string(rc));
    if (rc != 0) return o;
    std::string why;
    o.check(schema_valid(out, why), std::string(name) + ": " + why);
    tnr.push_back(easy_tnr(out, scorer));
  }
  const double bb = tnr[0], wb = tnr[3], wbp = tnr[4];
  o.check(bb <= wb && wb <= wbp,
          "easy TNR not monotone: black " + fmt(bb) + ", white " + fmt(wb) + ", white+ " + fmt(wbp));

  // Grey box at eps = 0 against black box, score by score.
  auto column = [](const fs::path& scores, const std::string& name) {
    std::vector<std::string> values;
    std::istringstream is(read_file(scores));
    std::string line;
    std::getline(is, line);
    std::vector<std::string> header;
    std::stringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
    const auto col = static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
    while (std::getline(is, line)) {
      std::stringstream ls(line);
      std::string cell;
      for (std::size_t k = 0; k <= col && std::getline(ls, cell, ','); ++k) {
      }
      values.push_back(cell);
    }
    return values;
  };
  const auto bb_scores = column(scratch_path("black_box") / "scores.csv", "fr0_sum");
  const auto gb_scores = column(scratch_path("grey_box_eps0") / "scores.csv", "fr0_sum");
  o.check(!bb_scores.empty() && bb_scores == gb_scores, "grey_box eps=0 scores differ from black_box");
  if (o.pass) {
    o.detail = "5 runs exit 0, easy TNR " + fmt(bb) + " <= " + fmt(wb) + " <= " + fmt(wbp) +
               ", grey eps=0 identical to black";
  }
  return o;
}

// ---- 9 -----------------------------------------------------------------------

Outcome criterion_9() {
  Outcome o;
  const fs::path dir = scratch_path("black_box");
  std::istringstream is(read_file(dir / "report.csv"));
  std::set<std::string> scorers;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    std::stringstream ls(line);
    std::string setting, scorer;
    std::getline(ls, setting, ',');
    std::getline(ls, scorer, ',');
    scorers.insert(scorer);
  }
  for (const char* s : {"fr0_sum", "fr0_min", "kl0_sum", "kl0_min"}) o.check(scorers.count(s) == 1, "missing " + std::string(s));

  const FeatureDump d = load_dump(fs::path(IGEOOD_FIXTURE_DIR) / "test_in");
  std::size_t odin_mismatch = 0, rank_mismatch = 0;
  std::vector<double> energy, lse;
  for (Eigen::Index i = 0; i < d.logits.rows(); ++i) {
    const Vector z = d.logits.row(i).transpose();
    if (score_baseline(z, ScorerKind::odin, 1.0) != score_baseline(z, ScorerKind::msp, 1.0)) ++odin_mismatch;
    energy.push_back(score_baseline(z, ScorerKind::energy, 1.0));
    const double m = z.maxCoeff();
    lse.push_back(m + std::log((z.array() - m).exp().sum()));
  }
  for (std::size_t i = 0; i < energy.size(); ++i) {
    for (std::size_t j = 0; j < energy.size(); ++j) {
      if ((energy[i] < energy[j]) != (lse[i] > lse[j])) ++rank_mismatch;
    }
  }
  o.check(odin_mismatch == 0, std::to_string(odin_mismatch) + " odin/msp mismatches");
  o.check(rank_mismatch == 0, std::to_string(rank_mismatch) + " energy/logsumexp rank mismatches");
  if (o.pass) o.detail = "sum/min columns for FR and KL present, odin(T=1) == msp, energy ranks match logsumexp";
  return o;
}

// ---- 10 ----------------------------------------------------------------------

Outcome criterion_10() {
  Outcome o;
  const fs::path cfg = fs::path(IGEOOD_FIXTURE_DIR) / "black_box.json";
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  o.check(run_cli({"run", "--config", cfg.string(), "--seed", "3", "--out", a.string()}) == 0, "first run");
  o.check(run_cli({"run", "--config", cfg.string(), "--seed", "3", "--out", b.string()}) == 0, "second run");
  o.check(read_file(a / "report.csv") == read_file(b / "report.csv"), "report.csv differs between runs");

  std::mt19937_64 rng(10);
  std::normal_distribution<double> n01(0.0, 3.0);
  FeatureDump d;
  d.n_classes = 5;
  auto random_floats = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(n01(rng));
    return m;
  };
  d.logits = random_floats(37, 5);
  d.labels = std::vector<std::uint32_t>(37);
  for (std::size_t i = 0; i < 37; ++i) (*d.labels)[i] = static_cast<std::uint32_t>(i % 5);
  d.layers.push_back({"a", random_floats(37, 3)});
  d.layers.push_back({"b", random_floats(37, 11)});
  d.inputs = random_floats(37, 4);
  const fs::path dir = scratch("roundtrip");
  save_dump(d, dir);
  const FeatureDump r = load_dump(dir);
  auto same = [](const Matrix& x, const Matrix& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
  };
  bool exact = r.n_classes == d.n_classes && same(r.logits, d.logits) && r.labels == d.labels &&
               r.layers.size() == 2 && r.inputs && same(*r.inputs, *d.inputs);
  for (std::size_t l = 0; exact && l < 2; ++l) exact = r.layers[l].name == d.layers[l].name && same(r.layers[l].values, d.layers[l].values);
  o.check(exact, "dump round-trip not bit-exact");
  if (o.pass) o.detail = "report.csv byte-identical across runs, dump round-trip bit-exact";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    Outcome (*run)();
    double budget_s;
  };
  const Criterion criteria[] = {
      {1, "geometry closed forms", criterion_1, 1.0},
      {2, "manifold properties", criterion_2, 10.0},
      {3, "gradients vs finite differences", criterion_3, 5.0},
      {4, "metric oracles", criterion_4, 0.0},
      {5, "toy 1-D comparison", criterion_5, 10.0},
      {6, "FR classification agreement", criterion_6, 60.0},
      {7, "centroid descent", criterion_7, 0.0},
      {8, "pipeline end-to-end", criterion_8, 60.0},
      {9, "sum/min ablation and baseline identities", criterion_9, 0.0},
      {10, "determinism", criterion_10, 0.0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0.0 && secs >= c.budget_s) {
      o.pass = false;
      o.detail += "; took " + fmt(secs) + " s, budget " + fmt(c.budget_s) + " s";
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(),
                secs);
  }
  std::fflush(stdout);
  return failures == 0 ? 0 : 1;
}
