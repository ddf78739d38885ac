// SPDX-License-Identifier: Apache-2.0
//
// Batch loss/gradient: per-sample reference vs the batched kernel run
// serially and with OpenMP. Arguments: batch size.

#include <benchmark/benchmark.h>

#include <vector>

#include "tfenn/kernels.hpp"
#include "tfenn/network.hpp"
#include "tfenn/reference.hpp"

namespace {

using namespace tfenn;

struct Fixture {
  Network net;
  std::vector<double> params, x, y, grad;
  std::size_t n;
  int steps;

  Fixture(ModelKind kind, int dim, SymmetryKind sym, std::vector<int> hidden, std::size_t n_, int steps_)
      : net(make(kind, dim, sym, std::move(hidden))), n(n_), steps(steps_) {
    Rng rng(7);
    params = net.init_params(rng).values;
    grad.resize(params.size());
    const int io = net.io_size();
    for (std::size_t s = 0; s < n * steps; ++s) {
      const SmallMat f = random_deformation(dim, 0.7, 1.3, rng);
      const SymTensor c = SymTensor::from_matrix(SmallMat(f.transpose() * f));
      x.insert(x.end(), c.mandel().begin(), c.mandel().end());
      for (int k = 0; k < io; ++k) y.push_back(rng.uniform(-1, 1));
    }
  }

  static ModelSpec make(ModelKind kind, int dim, SymmetryKind sym, std::vector<int> hidden) {
    ModelSpec s;
    s.kind = kind;
    s.dim = dim;
    s.symmetry = sym;
    s.hidden = std::move(hidden);
    return s;
  }

  BatchView view() const { return {x.data(), y.data(), n, steps, net.io_size(), nullptr}; }
};

enum class Path { kReference, kSerial, kParallel };

template <Path P>
void run(benchmark::State& state, const Fixture& f) {
  std::vector<double> grad(f.params.size());
  for (auto _ : state) {
    double loss = 0.0;
    if constexpr (P == Path::kReference)
      loss = reference::loss_and_gradient(f.net, f.params, f.view(), {}, grad);
    else
      loss = loss_and_gradient(f.net, f.params, f.view(), {}, grad,
                               P == Path::kSerial ? Exec::kSerial : Exec::kParallel);
    benchmark::DoNotOptimize(loss);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.n));
  state.counters["threads"] = P == Path::kParallel ? max_threads() : 1;
}

template <Path P>
void BM_FeedForwardIsotropic3D(benchmark::State& state) {
  static const Fixture f(ModelKind::kTfennFF, 3, SymmetryKind::kIsotropic, {23, 23}, 512, 1);
  run<P>(state, f);
}

template <Path P>
void BM_FeedForwardCubic2D(benchmark::State& state) {
  static const Fixture f(ModelKind::kTfennFF, 2, SymmetryKind::kCubic, {37, 37}, 512, 1);
  run<P>(state, f);
}

template <Path P>
void BM_ScalarMlp2D(benchmark::State& state) {
  static const Fixture f(ModelKind::kScalarMLP, 2, SymmetryKind::kNone, {64, 64}, 512, 1);
  run<P>(state, f);
}

template <Path P>
void BM_GruIsotropic2D(benchmark::State& state) {
  static const Fixture f(ModelKind::kTfennGRU, 2, SymmetryKind::kIsotropic, {8, 8}, 64, 20);
  run<P>(state, f);
}

}  // namespace

BENCHMARK(BM_FeedForwardIsotropic3D<Path::kReference>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeedForwardIsotropic3D<Path::kSerial>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeedForwardIsotropic3D<Path::kParallel>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeedForwardCubic2D<Path::kReference>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeedForwardCubic2D<Path::kSerial>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeedForwardCubic2D<Path::kParallel>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScalarMlp2D<Path::kReference>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScalarMlp2D<Path::kSerial>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScalarMlp2D<Path::kParallel>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GruIsotropic2D<Path::kReference>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GruIsotropic2D<Path::kSerial>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GruIsotropic2D<Path::kParallel>)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
