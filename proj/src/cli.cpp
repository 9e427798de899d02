#include "igeood/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "igeood/datastore.hpp"
#include "igeood/error.hpp"
#include "igeood/kernels.hpp"
#include "igeood/nnet.hpp"

namespace igeood {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- config ------------------------------------------------------------------

template <class T>
T get_as(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown " + where + " key '" + key + "'");
    }
  }
}

// ---- data --------------------------------------------------------------------

struct Population {
  std::string name;
  FeatureDump dump;
};

Population load_population(const std::string& name, const fs::path& dir) { return {name, load_dump(dir)}; }

void require_layers(const FeatureDump& ref, const Population& p) {
  if (p.dump.layers.size() != ref.layers.size()) {
    throw InvalidInputError("dump '" + p.name + "' has " + std::to_string(p.dump.layers.size()) +
                            " layers, training dump has " + std::to_string(ref.layers.size()));
  }
  for (std::size_t l = 0; l < ref.layers.size(); ++l) {
    if (p.dump.layers[l].values.cols() != ref.layers[l].values.cols()) {
      throw InvalidInputError("dump '" + p.name + "' layer " + std::to_string(l) + " width differs from training");
    }
  }
  if (p.dump.n_classes != ref.n_classes) {
    throw InvalidInputError("dump '" + p.name + "' has a different number of classes than training");
  }
}

Matrix round_to_float(const Matrix& m) {
  return m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

// Logits, features and inputs of FGSM examples built from the validation inputs.
Population adversarial_population(const MlpParams& model, const FeatureDump& source, double eps) {
  if (!source.inputs) throw InvalidInputError("validation dump has no inputs to attack");
  const Matrix& x = *source.inputs;
  Matrix adv(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector xi = x.row(i).transpose();
    std::uint32_t y = 0;
    if (source.labels) {
      y = (*source.labels)[static_cast<std::size_t>(i)];
    } else {
      source.logits.row(i).maxCoeff(&y);
    }
    adv.row(i) = fgsm_generate(model, xi, y, eps).transpose();
  }
  const BatchForward fwd = forward_batch(model, adv);
  Population p;
  p.name = "fgsm";
  p.dump.n_classes = source.n_classes;
  p.dump.logits = round_to_float(fwd.logits);
  for (std::size_t l = 0; l < fwd.hidden.size(); ++l) {
    p.dump.layers.push_back({"layer_" + std::to_string(l), round_to_float(fwd.hidden[l])});
  }
  p.dump.inputs = round_to_float(adv);
  return p;
}

// ---- scoring helpers ---------------------------------------------------------

struct Fitted {
  CentroidSet fr;
  CentroidSet kl;
};

std::vector<double> logit_scores(ScorerKind kind, Aggregation agg, const Matrix& logits, double t, const Fitted& f) {
  switch (kind) {
    case ScorerKind::fr0: return parallel::score_fr0(logits, f.fr, t, agg);
    case ScorerKind::kl0: return parallel::score_kl0(logits, f.kl, t, agg);
    default: return parallel::score_baseline(logits, kind, t);
  }
}

double validation_tnr(const std::vector<double>& in, const std::vector<double>& out, Orientation o) {
  return tnr_at_tpr(in, out, o);
}

void add_rows(std::vector<ReportRow>& rows, Setting setting, const std::string& scorer, Orientation o,
              const std::vector<double>& in, const std::vector<std::pair<std::string, std::vector<double>>>& outs,
              double t, double eps) {
  for (const auto& [name, out] : outs) rows.push_back({setting, scorer, name, evaluate(in, out, o), t, eps});
}

struct Column {
  std::string name;
  Orientation orientation;
  double temperature;
  double eps;
  // Scores of test_in followed by each test_out population.
  std::vector<std::vector<double>> per_population;
};

}  // namespace

const char* to_string(Setting s) {
  switch (s) {
    case Setting::black_box: return "black_box";
    case Setting::grey_box: return "grey_box";
    case Setting::white_box: return "white_box";
    case Setting::white_box_plus: return "white_box_plus";
  }
  return "unknown";
}

Setting parse_setting(const std::string& name) {
  for (auto s : {Setting::black_box, Setting::grey_box, Setting::white_box, Setting::white_box_plus}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown setting '" + name + "'");
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config " + file.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j, {"setting", "train", "test_in", "test_out", "validation_in", "validation_out", "model", "centroids",
                     "tune", "fgsm_eps", "seed"},
                 "config");
  const fs::path base = file.parent_path();
  for (const char* key : {"setting", "train", "test_in", "test_out"}) {
    if (!j.contains(key)) throw ConfigError(std::string("config is missing '") + key + "'");
  }

  ExperimentConfig cfg;
  cfg.setting = parse_setting(get_as<std::string>(j, "setting"));
  cfg.train = resolve(base, get_as<std::string>(j, "train"));
  cfg.test_in = resolve(base, get_as<std::string>(j, "test_in"));
  const json& outs = j.at("test_out");
  if (!outs.is_object() || outs.empty()) throw ConfigError("config 'test_out' must map names to dump directories");
  for (const auto& [name, path] : outs.items()) {
    if (!path.is_string()) throw ConfigError("config 'test_out." + name + "' must be a path");
    cfg.test_out.emplace_back(name, resolve(base, path.get<std::string>()));
  }
  if (j.contains("validation_in")) cfg.validation_in = resolve(base, get_as<std::string>(j, "validation_in"));
  if (j.contains("validation_out")) cfg.validation_out = resolve(base, get_as<std::string>(j, "validation_out"));
  if (j.contains("model")) cfg.model = resolve(base, get_as<std::string>(j, "model"));
  if (j.contains("fgsm_eps")) cfg.fgsm_eps = get_as<double>(j, "fgsm_eps");
  if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j, "seed");

  if (j.contains("centroids")) {
    const json& c = j.at("centroids");
    if (!c.is_object()) throw ConfigError("config 'centroids' must be an object");
    reject_unknown(c, {"learning_rate", "epochs", "full_batch", "batch_size", "temperature"}, "centroids");
    if (c.contains("learning_rate")) cfg.centroids.learning_rate = get_as<double>(c, "learning_rate");
    if (c.contains("epochs")) cfg.centroids.epochs = get_as<int>(c, "epochs");
    if (c.contains("full_batch")) cfg.centroids.full_batch = get_as<bool>(c, "full_batch");
    if (c.contains("batch_size")) cfg.centroids.batch_size = get_as<int>(c, "batch_size");
    if (c.contains("temperature")) cfg.centroids.temperature = get_as<double>(c, "temperature");
  }
  if (j.contains("tune")) {
    const json& t = j.at("tune");
    if (!t.is_object()) throw ConfigError("config 'tune' must be an object");
    reject_unknown(t, {"temperatures", "epsilons"}, "tune");
    if (t.contains("temperatures")) cfg.tune.temperatures = get_as<std::vector<double>>(t, "temperatures");
    if (t.contains("epsilons")) cfg.tune.epsilons = get_as<std::vector<double>>(t, "epsilons");
  }
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  tune.validate();
  if (!(centroids.learning_rate > 0.0) || centroids.epochs < 0 || centroids.batch_size < 1 ||
      !(centroids.temperature > 0.0)) {
    throw ConfigError("centroid settings must be positive");
  }
  if (!(fgsm_eps >= 0.0)) throw ConfigError("fgsm_eps must be >= 0");
  if (test_out.empty()) throw ConfigError("at least one test_out dump is required");
  auto require_dir = [](const fs::path& p, const std::string& what) {
    if (!fs::is_directory(p)) throw ConfigError(what + " dump directory not found: " + p.string());
  };
  require_dir(train, "train");
  require_dir(test_in, "test_in");
  for (const auto& [name, p] : test_out) require_dir(p, "test_out '" + name + "'");
  if (validation_in) require_dir(*validation_in, "validation_in");
  if (validation_out) require_dir(*validation_out, "validation_out");
  if (model && !fs::is_regular_file(*model)) throw ConfigError("model file not found: " + model->string());
  if (setting == Setting::grey_box && !model) throw ConfigError("grey_box needs a 'model' for input gradients");
  if (setting == Setting::white_box_plus && !validation_out) {
    throw ConfigError("white_box_plus needs a 'validation_out' dump to estimate OOD statistics");
  }
  if (setting == Setting::white_box && !validation_out && !model) {
    throw ConfigError("white_box needs 'validation_out' or a 'model' to generate adversarial validation data");
  }
}

RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  RunResult result;

  const FeatureDump train = load_dump(cfg.train);
  if (!train.labels) throw InvalidInputError("training dump has no labels");
  const Population test_in = load_population("in", cfg.test_in);
  std::vector<Population> test_out;
  for (const auto& [name, p] : cfg.test_out) test_out.push_back(load_population(name, p));
  const Population val_in = cfg.validation_in ? load_population("validation_in", *cfg.validation_in) : test_in;
  std::optional<Population> val_out;
  if (cfg.validation_out) val_out = load_population("validation_out", *cfg.validation_out);
  std::optional<MlpParams> model;
  if (cfg.model) model = load_mlp(*cfg.model);

  const bool white = cfg.setting == Setting::white_box || cfg.setting == Setting::white_box_plus;
  for (const Population* p : {&test_in, &val_in}) require_layers(train, *p);
  for (const auto& p : test_out) require_layers(train, p);
  if (val_out) require_layers(train, *val_out);
  if (white && train.layers.empty()) throw InvalidInputError("white-box settings need layer features in the dumps");

  // Validation OOD source.
  if (val_out) {
    result.validation_ood = "validation_out";
  } else if (white) {
    val_out = adversarial_population(*model, val_in.dump, cfg.fgsm_eps);
    result.validation_ood = "fgsm";
  } else {
    result.validation_ood = "none";
  }

  Fitted fitted;
  CentroidFitConfig ccfg = cfg.centroids;
  ccfg.seed = cfg.seed;
  ccfg.distance = FitDistance::fisher_rao;
  fitted.fr = fit_centroids(train.labeled_logits(), ccfg);
  ccfg.distance = FitDistance::kl;
  fitted.kl = fit_centroids(train.labeled_logits(), ccfg);
  result.centroid_final_loss = fitted.fr.final_loss;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw FormatError(FormatErrorCode::io_failure, out_dir.string(), "cannot create output directory");
  save_centroids(fitted.fr, out_dir / "centroids.json");

  std::vector<const Population*> tests{&test_in};
  for (const auto& p : test_out) tests.push_back(&p);
  std::vector<Column> columns;

  auto tune_temperature = [&](ScorerKind kind, Aggregation agg) {
    if (!val_out || kind == ScorerKind::msp) return 1.0;
    const Orientation o = orientation_of(kind, agg);
    const TuneGrid grid{cfg.tune.temperatures, {0.0}};
    return grid_search(grid, [&](double t, double) {
             return validation_tnr(logit_scores(kind, agg, val_in.dump.logits, t, fitted),
                                   logit_scores(kind, agg, val_out->dump.logits, t, fitted), o);
           }).temperature;
  };
  auto logit_column = [&](ScorerKind kind, Aggregation agg, double t) {
    ScorerSpec spec{kind, t, agg, std::nullopt};
    Column c{spec.name(), spec.orientation(), t, 0.0, {}};
    for (const Population* p : tests) c.per_population.push_back(logit_scores(kind, agg, p->dump.logits, t, fitted));
    return c;
  };

  if (cfg.setting == Setting::black_box) {
    const std::pair<ScorerKind, Aggregation> scorers[] = {
        {ScorerKind::fr0, Aggregation::sum}, {ScorerKind::fr0, Aggregation::min}, {ScorerKind::kl0, Aggregation::sum},
        {ScorerKind::kl0, Aggregation::min}, {ScorerKind::msp, Aggregation::sum}, {ScorerKind::odin, Aggregation::sum},
        {ScorerKind::energy, Aggregation::sum}};
    for (const auto& [kind, agg] : scorers) columns.push_back(logit_column(kind, agg, tune_temperature(kind, agg)));
  }

  if (cfg.setting == Setting::grey_box) {
    for (const Population* p : {&val_in, &test_in}) {
      if (!p->dump.inputs) throw InvalidInputError("grey_box needs inputs in dump '" + p->name + "'");
    }
    for (const auto& p : test_out) {
      if (!p.dump.inputs) throw InvalidInputError("grey_box needs inputs in dump '" + p.name + "'");
    }
    if (val_out && !val_out->dump.inputs) throw InvalidInputError("grey_box needs inputs in the validation_out dump");
    auto logits_for = [&](const FeatureDump& d, double t, double eps) {
      if (eps == 0.0) return d.logits;
      return parallel::forward_logits(
          *model, parallel::preprocess_fr0(*model, *d.inputs, fitted.fr, t, eps, Aggregation::sum));
    };
    auto scores_for = [&](const FeatureDump& d, double t, double eps) {
      return parallel::score_fr0(logits_for(d, t, eps), fitted.fr, t, Aggregation::sum);
    };
    GridResult best{1.0, 0.0, 0.0};
    if (val_out) {
      best = grid_search(cfg.tune, [&](double t, double eps) {
        return validation_tnr(scores_for(val_in.dump, t, eps), scores_for(val_out->dump, t, eps),
                              Orientation::higher_is_in);
      });
    }
    Column c{"fr0_sum", Orientation::higher_is_in, best.temperature, best.eps, {}};
    for (const Population* p : tests) c.per_population.push_back(scores_for(p->dump, best.temperature, best.eps));
    columns.push_back(std::move(c));
  }

  if (white) {
    const bool plus = cfg.setting == Setting::white_box_plus;
    const FeatureStats stats = fit_gaussian_stats(train.labeled_features());
    save_feature_stats(stats, out_dir / "feature_stats.json");
    OodStats ood;
    if (plus) {
      ood = fit_ood_stats(val_out->dump.layer_values());
      save_ood_stats(ood, out_dir / "ood_stats.json");
    }
    const double t0 = tune_temperature(ScorerKind::fr0, Aggregation::sum);
    const std::size_t n_layers = train.layers.size();

    // Component scores of a population: FR0, FR_l for every layer, then FR'_l when enabled.
    auto components = [&](const FeatureDump& d) {
      ScoreTable table;
      table.add("fr0_sum", parallel::score_fr0(d.logits, fitted.fr, t0, Aggregation::sum), Orientation::higher_is_in);
      for (std::size_t l = 0; l < n_layers; ++l) {
        table.add("fr_layer_" + std::to_string(l), parallel::score_fr_layer(d.layers[l].values, stats, l),
                  Orientation::lower_is_in);
      }
      if (plus) {
        for (std::size_t l = 0; l < n_layers; ++l) {
          table.add("fr_layer_ood_" + std::to_string(l),
                    parallel::score_fr_layer_ood(d.layers[l].values, stats, ood, l), Orientation::higher_is_in);
        }
      }
      return table;
    };
    auto stack = [](const ScoreTable& a, const ScoreTable& b) {
      ScoreTable out;
      for (std::size_t j = 0; j < a.num_columns(); ++j) {
        std::vector<double> v = a.columns()[j].values;
        v.insert(v.end(), b.columns()[j].values.begin(), b.columns()[j].values.end());
        out.add(a.columns()[j].name, std::move(v), a.columns()[j].orientation);
      }
      return out;
    };
    auto labels_for = [](std::size_t n_in, std::size_t n_out) {
      std::vector<std::uint8_t> y(n_in + n_out, 0);
      std::fill_n(y.begin(), n_in, std::uint8_t{1});
      return y;
    };

    const ScoreTable val_in_table = components(val_in.dump);
    const ScoreTable val_out_table = components(val_out->dump);
    const EnsembleWeights weights =
        fit_alpha(stack(val_in_table, val_out_table),
                  labels_for(val_in_table.num_samples(), val_out_table.num_samples()));
    std::vector<std::string> names;
    for (const auto& c : val_in_table.columns()) names.push_back(c.name);
    result.ensemble = std::make_pair(names, weights);
    save_ensemble(weights, names, out_dir / "ensemble.json");

    std::vector<ScoreTable> test_tables;
    for (const Population* p : tests) test_tables.push_back(components(p->dump));
    Column ens{plus ? "igeood_plus" : "igeood", Orientation::higher_is_in, t0, 0.0, {}};
    for (const auto& t : test_tables) ens.per_population.push_back(score_ensemble(t, weights));
    columns.push_back(std::move(ens));
    for (std::size_t j = 0; j < val_in_table.num_columns(); ++j) {
      const auto& ref = val_in_table.columns()[j];
      if (plus && ref.name.rfind("fr_layer_ood_", 0) != 0) continue;
      Column c{ref.name, ref.orientation, ref.name == "fr0_sum" ? t0 : 1.0, 0.0, {}};
      for (const auto& t : test_tables) c.per_population.push_back(t.columns()[j].values);
      columns.push_back(std::move(c));
    }

    if (!plus) {
      // Mahalanobis baseline: tied-covariance Gaussian per layer and its own logistic ensemble.
      std::vector<TiedGaussianLayer> tied;
      for (std::size_t l = 0; l < n_layers; ++l) {
        tied.push_back(fit_tied_gaussian(train.layers[l].values, *train.labels, train.n_classes));
      }
      auto maha = [&](const FeatureDump& d) {
        ScoreTable table;
        for (std::size_t l = 0; l < n_layers; ++l) {
          table.add("mahalanobis_" + std::to_string(l),
                    parallel::score_mahalanobis_layer(d.layers[l].values, tied[l].class_means, tied[l].covariance),
                    Orientation::higher_is_in);
        }
        return table;
      };
      const ScoreTable mi = maha(val_in.dump);
      const ScoreTable mo = maha(val_out->dump);
      const EnsembleWeights mw = fit_alpha(stack(mi, mo), labels_for(mi.num_samples(), mo.num_samples()));
      std::vector<ScoreTable> mt;
      for (const Population* p : tests) mt.push_back(maha(p->dump));
      Column me{"mahalanobis", Orientation::higher_is_in, 1.0, 0.0, {}};
      for (const auto& t : mt) me.per_population.push_back(score_ensemble(t, mw));
      columns.push_back(std::move(me));
      for (std::size_t l = 0; l < n_layers; ++l) {
        Column c{"mahalanobis_" + std::to_string(l), Orientation::higher_is_in, 1.0, 0.0, {}};
        for (const auto& t : mt) c.per_population.push_back(t.columns()[l].values);
        columns.push_back(std::move(c));
      }
    }
  }

  for (const Column& c : columns) {
    std::vector<std::pair<std::string, std::vector<double>>> outs;
    for (std::size_t i = 0; i < test_out.size(); ++i) outs.emplace_back(test_out[i].name, c.per_population[i + 1]);
    add_rows(result.rows, cfg.setting, c.name, c.orientation, c.per_population[0], outs, c.temperature, c.eps);
  }
  for (std::size_t p = 0; p < tests.size(); ++p) {
    PopulationScores ps{tests[p]->name, {}};
    for (const Column& c : columns) ps.table.add(c.name, c.per_population[p], c.orientation);
    result.scores.push_back(std::move(ps));
  }
  return result;
}

// ---- writers -----------------------------------------------------------------

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw FormatError(FormatErrorCode::io_failure, file.string(), "cannot open for writing");
  return os;
}

void finish(std::ofstream& os, const fs::path& file) {
  os.flush();
  if (!os) throw FormatError(FormatErrorCode::io_failure, file.string(), "write failed");
}

}  // namespace

void write_report_csv(const std::vector<ReportRow>& rows, const fs::path& file) {
  auto os = open_out(file);
  os << "setting,scorer,ood_set,tnr_at_tpr95,auroc,aupr,delta,temperature,eps,n_in,n_out\n";
  for (const auto& r : rows) {
    os << to_string(r.setting) << ',' << r.scorer << ',' << r.ood_set << ',' << format_double(r.metrics.tnr_at_tpr95)
       << ',' << format_double(r.metrics.auroc) << ',' << format_double(r.metrics.aupr) << ','
       << format_double(r.metrics.delta) << ',' << format_double(r.temperature) << ',' << format_double(r.eps) << ','
       << r.metrics.n_in << ',' << r.metrics.n_out << '\n';
  }
  finish(os, file);
}

void write_report_json(const ExperimentConfig& cfg, const RunResult& result, const fs::path& file) {
  json rows = json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"setting", to_string(r.setting)},
                    {"scorer", r.scorer},
                    {"ood_set", r.ood_set},
                    {"tnr_at_tpr95", r.metrics.tnr_at_tpr95},
                    {"auroc", r.metrics.auroc},
                    {"aupr", r.metrics.aupr},
                    {"delta", r.metrics.delta},
                    {"temperature", r.temperature},
                    {"eps", r.eps},
                    {"n_in", r.metrics.n_in},
                    {"n_out", r.metrics.n_out}});
  }
  json j = {{"setting", to_string(cfg.setting)},
            {"seed", cfg.seed},
            {"validation_ood", result.validation_ood},
            {"centroid_final_loss", result.centroid_final_loss},
            {"rows", rows}};
  if (result.ensemble) {
    const auto& [names, w] = *result.ensemble;
    j["ensemble"] = {{"columns", names},
                     {"alpha", std::vector<double>(w.alpha.data(), w.alpha.data() + w.alpha.size())},
                     {"intercept", w.intercept},
                     {"fitted_iterations", w.fitted_iterations}};
  }
  auto os = open_out(file);
  os << j.dump(2) << '\n';
  finish(os, file);
}

void write_scores_csv(const std::vector<PopulationScores>& scores, const fs::path& file) {
  auto os = open_out(file);
  os << "population,index";
  if (!scores.empty()) {
    for (const auto& c : scores.front().table.columns()) os << ',' << c.name;
  }
  os << '\n';
  for (const auto& p : scores) {
    const auto& cols = p.table.columns();
    for (std::size_t i = 0; i < p.table.num_samples(); ++i) {
      os << p.population << ',' << i;
      for (const auto& c : cols) os << ',' << format_double(c.values[i]);
      os << '\n';
    }
  }
  finish(os, file);
}

// ---- histogram ---------------------------------------------------------------

Histogram histogram(const std::vector<std::pair<std::string, std::vector<double>>>& populations, int bins) {
  if (bins < 1) throw ConfigError("histogram: bins must be >= 1");
  if (populations.empty()) throw InvalidInputError("histogram: no populations");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& [name, v] : populations) {
    if (v.empty()) throw InvalidInputError("histogram: population '" + name + "' has no scores");
    for (double x : v) {
      if (!std::isfinite(x)) throw InvalidInputError("histogram: non-finite score in '" + name + "'");
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  Histogram h;
  const double width = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) h.edges.push_back(lo + b * width);
  h.edges.push_back(hi);
  for (const auto& [name, v] : populations) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double x : v) {
      int b = width > 0.0 ? static_cast<int>((x - lo) / width) : 0;
      b = std::clamp(b, 0, bins - 1);
      ++counts[static_cast<std::size_t>(b)];
    }
    h.counts.emplace_back(name, std::move(counts));
  }
  return h;
}

std::vector<std::pair<std::string, std::vector<double>>> read_score_column(const fs::path& file,
                                                                           const std::string& column) {
  std::ifstream is(file);
  if (!is) throw FormatError(FormatErrorCode::file_missing, file.string(), "cannot open scores file");
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  std::string line;
  if (!std::getline(is, line)) throw FormatError(FormatErrorCode::manifest_parse, file.string(), "empty scores file");
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "population") {
    throw FormatError(FormatErrorCode::manifest_parse, file.string(), "expected a 'population,index,...' header");
  }
  std::size_t col = 2;
  if (!column.empty()) {
    const auto it = std::find(header.begin(), header.end(), column);
    if (it == header.end() || it - header.begin() < 2) throw ConfigError("scores file has no column '" + column + "'");
    col = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<std::pair<std::string, std::vector<double>>> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw FormatError(FormatErrorCode::size_mismatch, file.string(), "line " + std::to_string(line_no) + " has " +
                                                                            std::to_string(cells.size()) + " cells");
    }
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(cells[col], &used);
      if (used != cells[col].size()) throw std::invalid_argument(cells[col]);
    } catch (const std::exception&) {
      throw FormatError(FormatErrorCode::wrong_type, file.string(), "line " + std::to_string(line_no) + ": bad number");
    }
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == cells[0]; });
    if (it == out.end()) {
      out.emplace_back(cells[0], std::vector<double>{});
      it = std::prev(out.end());
    }
    it->second.push_back(v);
  }
  return out;
}

void write_histogram_csv(const Histogram& h, const fs::path& file) {
  auto os = open_out(file);
  os << "bin,lower,upper";
  for (const auto& [name, _] : h.counts) os << ',' << name;
  os << '\n';
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
    os << b << ',' << format_double(h.edges[b]) << ',' << format_double(h.edges[b + 1]);
    for (const auto& [_, counts] : h.counts) os << ',' << counts[b];
    os << '\n';
  }
  finish(os, file);
}

// ---- toy ---------------------------------------------------------------------

ToyResult run_toy(const ToySpec& spec) {
  spec.validate();
  if (spec.n == 0) throw ConfigError("toy: n must be >= 1");
  const ToyData data = gen_toy1d(spec);
  ToySpec pseudo_spec = spec;
  pseudo_spec.seed = spec.seed + 1;
  const ToyData pseudo = gen_toy1d(pseudo_spec);

  auto column = [](const std::vector<double>& v) {
    return Matrix(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  const Matrix ood_sets[] = {column(pseudo.ood_a), column(pseudo.ood_b)};
  const OodStats ref = fit_ood_stats(ood_sets);

  ToyResult result;
  result.mu_prime_a = ref.layers[0].mu[0];
  result.sigma_prime_a = ref.layers[0].sigma[0];
  result.mu_prime_b = ref.layers[1].mu[0];
  result.sigma_prime_b = ref.layers[1].sigma[0];

  auto maha = [&](const std::vector<double>& xs) {
    std::vector<double> s;
    for (double x : xs) s.push_back(std::abs(x - spec.mu1) / spec.sigma1);
    return s;
  };
  auto fr = [&](const std::vector<double>& xs, double mu, double sigma) {
    std::vector<double> s;
    for (double x : xs) s.push_back(fr_gauss_1d({x, spec.sigma1}, {mu, sigma}));
    return s;
  };

  const std::pair<std::string, const std::vector<double>*> pops[] = {
      {"in", &data.in}, {"ood_a", &data.ood_a}, {"ood_b", &data.ood_b}};
  for (const auto& [name, xs] : pops) {
    PopulationScores ps{name, {}};
    ps.table.add("mahalanobis", maha(*xs), Orientation::lower_is_in);
    ps.table.add("fr_ood_a", fr(*xs, result.mu_prime_a, result.sigma_prime_a), Orientation::higher_is_in);
    ps.table.add("fr_ood_b", fr(*xs, result.mu_prime_b, result.sigma_prime_b), Orientation::higher_is_in);
    result.scores.push_back(std::move(ps));
  }
  const auto& in = result.scores[0].table;
  for (std::size_t k = 1; k <= 2; ++k) {
    const std::string ood = k == 1 ? "ood_a" : "ood_b";
    const auto& out = result.scores[k].table;
    for (const std::string& score : {std::string("mahalanobis"), "fr_" + ood}) {
      const auto& ci = in.column(score);
      result.rows.push_back({score == "mahalanobis" ? "mahalanobis" : "fr", ood, ci.orientation,
                             auroc(ci.values, out.column(score).values, ci.orientation)});
    }
  }
  return result;
}

// ---- fixture -----------------------------------------------------------------

namespace {

Matrix gaussian_samples(const Matrix& means, double sd, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(n), means.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index c = i % means.rows();
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = means(c, j) + sd * normal(rng);
  }
  return x;
}

FeatureDump dump_of(const MlpParams& model, const Matrix& x, const std::vector<std::uint32_t>* labels) {
  const Matrix xf = round_to_float(x);
  const BatchForward fwd = forward_batch(model, xf);
  FeatureDump d;
  d.n_classes = static_cast<std::uint32_t>(model.output_dim());
  d.logits = fwd.logits;
  if (labels) d.labels = *labels;
  for (std::size_t l = 0; l < fwd.hidden.size(); ++l) d.layers.push_back({"hidden_" + std::to_string(l), fwd.hidden[l]});
  d.inputs = xf;
  return d;
}

}  // namespace

void generate_fixture(const fs::path& dir, const FixtureSpec& spec) {
  constexpr Eigen::Index kDim = 8;
  constexpr Eigen::Index kClasses = 4;
  const std::uint64_t s = spec.seed;
  const Blobs train_set = gen_blobs(BlobSpec::on_axes(kDim, kClasses, 3.0, 1.0, spec.n_train_per_class, s));
  const Blobs test = gen_blobs(BlobSpec::on_axes(kDim, kClasses, 3.0, 1.0, spec.n_test_per_class, s + 1));
  const Blobs val = gen_blobs(BlobSpec::on_axes(kDim, kClasses, 3.0, 1.0, spec.n_val_per_class, s + 2));

  // Easy OOD: a tight cloud between the classes. Hard OOD: blobs on the unused axes.
  const Matrix origin = Matrix::Zero(1, kDim);
  Matrix other_axes = Matrix::Zero(kClasses, kDim);
  for (Eigen::Index c = 0; c < kClasses; ++c) other_axes(c, kClasses + c) = 3.0;
  const Matrix easy = gaussian_samples(origin, 0.35, spec.n_ood, s + 3);
  const Matrix hard = gaussian_samples(other_axes, 1.0, spec.n_ood, s + 4);
  const Matrix val_out = gaussian_samples(origin, 0.35, spec.n_ood, s + 5);

  TrainConfig tc;
  tc.hidden_sizes = {16, 16};
  tc.epochs = 40;
  tc.seed = s;
  const MlpParams model = train(round_to_float(train_set.x), train_set.labels, tc);

  fs::create_directories(dir);
  save_mlp(model, dir / "model.json");
  save_dump(dump_of(model, train_set.x, &train_set.labels), dir / "train");
  save_dump(dump_of(model, test.x, &test.labels), dir / "test_in");
  save_dump(dump_of(model, val.x, &val.labels), dir / "val_in");
  save_dump(dump_of(model, easy, nullptr), dir / "test_out_easy");
  save_dump(dump_of(model, hard, nullptr), dir / "test_out_hard");
  save_dump(dump_of(model, val_out, nullptr), dir / "val_out");

  auto config = [&](Setting setting, bool with_val_out, std::optional<std::vector<double>> eps) {
    json j = {{"setting", to_string(setting)},
              {"train", "train"},
              {"test_in", "test_in"},
              {"test_out", {{"easy", "test_out_easy"}, {"hard", "test_out_hard"}}},
              {"validation_in", "val_in"},
              {"model", "model.json"},
              {"seed", 0}};
    if (with_val_out) j["validation_out"] = "val_out";
    if (eps) j["tune"] = {{"epsilons", *eps}};
    return j;
  };
  auto write = [&](const json& j, const std::string& name) {
    auto os = open_out(dir / name);
    os << j.dump(2) << '\n';
    finish(os, dir / name);
  };
  write(config(Setting::black_box, true, std::nullopt), "black_box.json");
  write(config(Setting::grey_box, true, std::nullopt), "grey_box.json");
  write(config(Setting::grey_box, true, std::vector<double>{0.0}), "grey_box_eps0.json");
  write(config(Setting::white_box, true, std::nullopt), "white_box.json");
  write(config(Setting::white_box, false, std::nullopt), "white_box_adversarial.json");
  write(config(Setting::white_box_plus, true, std::nullopt), "white_box_plus.json");
}

// ---- entry point -------------------------------------------------------------

namespace {

int exit_code_of(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) return 1;
  if (dynamic_cast<const FitError*>(&e)) return 3;
  return 2;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Fisher-Rao out-of-distribution detection on dumped logits and features", "igeood"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  auto* run = app.add_subcommand("run", "Fit, tune and evaluate one detector setting");
  run->add_option("--config", config_path, "Experiment JSON")->required();
  run->add_option("--seed", seed, "Overrides the config seed");
  run->add_option("--threads", threads, "OpenMP threads for scoring (0 = default)");
  run->add_option("--out", out_dir, "Output directory");

  std::string hist_input, hist_out, hist_column;
  int bins = 50;
  auto* hist = app.add_subcommand("histogram", "Bin a score column of scores.csv per population");
  hist->add_option("--input", hist_input, "scores.csv")->required();
  hist->add_option("--bins", bins, "Number of equal-width bins");
  hist->add_option("--out", hist_out, "Output CSV")->required();
  hist->add_option("--scorer", hist_column, "Score column (default: first)");

  ToySpec toy_spec;
  std::string toy_out;
  int toy_bins = 50;
  auto* toy = app.add_subcommand("toy", "1-D Gaussian comparison of the FR and Mahalanobis scores");
  toy->add_option("--mu1", toy_spec.mu1);
  toy->add_option("--sigma1", toy_spec.sigma1);
  toy->add_option("--mu2", toy_spec.mu2);
  toy->add_option("--sigma-a", toy_spec.sigma_a);
  toy->add_option("--sigma-b", toy_spec.sigma_b);
  toy->add_option("--n", toy_spec.n);
  toy->add_option("--seed", toy_spec.seed);
  toy->add_option("--bins", toy_bins);
  toy->add_option("--out", toy_out, "Directory for score and histogram CSVs");

  FixtureSpec fixture_spec;
  std::string fixture_out;
  auto* fixture = app.add_subcommand("gen-fixture", "Write a synthetic 4-class fixture with dumps and configs");
  fixture->add_option("--out", fixture_out)->required();
  fixture->add_option("--seed", fixture_spec.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      ExperimentConfig cfg = ExperimentConfig::load(config_path);
      if (seed) cfg.seed = *seed;
      if (threads < 0) throw ConfigError("--threads must be >= 0");
      parallel::set_num_threads(threads);
      const RunResult result = run_experiment(cfg, out_dir);
      write_report_csv(result.rows, fs::path(out_dir) / "report.csv");
      write_report_json(cfg, result, fs::path(out_dir) / "report.json");
      write_scores_csv(result.scores, fs::path(out_dir) / "scores.csv");
    } else if (*hist) {
      if (bins < 1) throw ConfigError("--bins must be >= 1");
      write_histogram_csv(histogram(read_score_column(hist_input, hist_column), bins), hist_out);
    } else if (*toy) {
      if (toy_bins < 1) throw ConfigError("--bins must be >= 1");
      const ToyResult r = run_toy(toy_spec);
      std::ostringstream report;
      report << "score,ood_set,orientation,auroc\n";
      for (const auto& row : r.rows) {
        report << row.score << ',' << row.ood_set << ','
               << (row.orientation == Orientation::higher_is_in ? "higher_is_in" : "lower_is_in") << ','
               << format_double(row.auroc) << '\n';
      }
      std::cout << report.str();
      if (!toy_out.empty()) {
        const fs::path dir(toy_out);
        auto os = open_out(dir / "toy_report.csv");
        os << report.str();
        finish(os, dir / "toy_report.csv");
        write_scores_csv(r.scores, dir / "toy_scores.csv");
        for (const char* ood_name : {"ood_a", "ood_b"}) {
          const std::string ood = ood_name;
          for (const std::string& score : {std::string("mahalanobis"), "fr_" + ood}) {
            const std::vector<std::pair<std::string, std::vector<double>>> pops = {
                {"in", r.scores[0].table.column(score).values},
                {ood, r.scores[ood == "ood_a" ? 1 : 2].table.column(score).values}};
            write_histogram_csv(histogram(pops, toy_bins), dir / ("toy_hist_" + score + "_" + ood + ".csv"));
          }
        }
      }
    } else if (*fixture) {
      generate_fixture(fixture_out, fixture_spec);
    }
  } catch (const std::exception& e) {
    std::cerr << "igeood: error: " << one_line(e.what()) << '\n';
    return exit_code_of(e);
  }
  return 0;
}

}  // namespace igeood
