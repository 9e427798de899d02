#include <optional>
#include <random>

#include <benchmark/benchmark.h>

#include "igeood/kernels.hpp"

using namespace igeood;

namespace {

Matrix random_matrix(std::uint64_t seed, Eigen::Index r, Eigen::Index c) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 2.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

constexpr Eigen::Index kRows = 20000;
constexpr Eigen::Index kClasses = 10;
constexpr Eigen::Index kWidth = 64;

struct Data {
  Matrix logits = random_matrix(1, kRows, kClasses);
  Matrix features = random_matrix(2, kRows, kWidth);
  Matrix inputs = random_matrix(3, 2000, 16);
  CentroidSet centroids{random_matrix(4, kClasses, kClasses)};
  FeatureStats stats;
  std::optional<TiedGaussianLayer> tied;
  MlpParams model = init_mlp({16, 32, 32, static_cast<int>(kClasses)}, Activation::tanh, 5);

  Data() {
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(kRows));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint32_t>(i % kClasses);
    stats = fit_gaussian_stats({{features}, labels, static_cast<std::uint32_t>(kClasses)});
    tied = fit_tied_gaussian(features, labels, static_cast<std::uint32_t>(kClasses));
  }
};

const Data& data() {
  static const Data d;
  return d;
}

template <bool Parallel>
void BM_Fr0(benchmark::State& state) {
  const Data& d = data();
  for (auto _ : state) {
    if constexpr (Parallel) {
      benchmark::DoNotOptimize(parallel::score_fr0(d.logits, d.centroids, 10.0, Aggregation::sum));
    } else {
      benchmark::DoNotOptimize(serial::score_fr0(d.logits, d.centroids, 10.0, Aggregation::sum));
    }
  }
  state.SetItemsProcessed(state.iterations() * kRows);
}

template <bool Parallel>
void BM_FrLayer(benchmark::State& state) {
  const Data& d = data();
  for (auto _ : state) {
    if constexpr (Parallel) {
      benchmark::DoNotOptimize(parallel::score_fr_layer(d.features, d.stats, 0));
    } else {
      benchmark::DoNotOptimize(serial::score_fr_layer(d.features, d.stats, 0));
    }
  }
  state.SetItemsProcessed(state.iterations() * kRows);
}

template <bool Parallel>
void BM_Mahalanobis(benchmark::State& state) {
  const Data& d = data();
  for (auto _ : state) {
    if constexpr (Parallel) {
      benchmark::DoNotOptimize(parallel::score_mahalanobis_layer(d.features, d.tied->class_means, d.tied->covariance));
    } else {
      benchmark::DoNotOptimize(serial::score_mahalanobis_layer(d.features, d.tied->class_means, d.tied->covariance));
    }
  }
  state.SetItemsProcessed(state.iterations() * kRows);
}

template <bool Parallel>
void BM_Preprocess(benchmark::State& state) {
  const Data& d = data();
  for (auto _ : state) {
    if constexpr (Parallel) {
      benchmark::DoNotOptimize(parallel::preprocess_fr0(d.model, d.inputs, d.centroids, 10.0, 0.001, Aggregation::sum));
    } else {
      benchmark::DoNotOptimize(serial::preprocess_fr0(d.model, d.inputs, d.centroids, 10.0, 0.001, Aggregation::sum));
    }
  }
  state.SetItemsProcessed(state.iterations() * d.inputs.rows());
}

}  // namespace

BENCHMARK(BM_Fr0<false>)->Name("fr0/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Fr0<true>)->Name("fr0/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FrLayer<false>)->Name("fr_layer/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FrLayer<true>)->Name("fr_layer/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Mahalanobis<false>)->Name("mahalanobis/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Mahalanobis<true>)->Name("mahalanobis/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Preprocess<false>)->Name("preprocess/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Preprocess<true>)->Name("preprocess/parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
