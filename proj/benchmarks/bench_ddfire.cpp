#include <benchmark/benchmark.h>

#include <cmath>
#include <complex>

#include "ddfire/channels.hpp"
#include "ddfire/fire.hpp"
#include "ddfire/operators.hpp"
#include "ddfire/priors.hpp"
#include "ddfire/random.hpp"
#include "ddfire/schedule.hpp"

using namespace ddfire;
using operators::LinearOperator;

namespace {

ImageShape square(Index n) { return {n, n}; }

Matrix gaussian_kernel(Index size, double width) {
  Matrix k(size, size);
  const double c = (size - 1) / 2.0;
  for (Index i = 0; i < size; ++i)
    for (Index j = 0; j < size; ++j)
      k(i, j) = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * width * width));
  return k / k.sum();
}

priors::GaussianMixture mixture(Index d, int components) {
  RandomStream rng(11);
  priors::GaussianMixture g;
  for (int c = 0; c < components; ++c) {
    g.weights.push_back(1.0 / components);
    g.means.push_back(rng.normal(d));
    g.variances.push_back(0.1);
  }
  return g;
}

void BM_ConvolutionApplyAdjoint(benchmark::State& state) {
  const auto shape = square(state.range(0));
  const auto op = LinearOperator::circular_convolution(shape, gaussian_kernel(9, 2.0));
  RandomStream rng(1);
  const Signal x = rng.normal(shape.size());
  for (auto _ : state) benchmark::DoNotOptimize(op.adjoint(op.apply(x)));
  state.SetItemsProcessed(state.iterations() * shape.size());
}
BENCHMARK(BM_ConvolutionApplyAdjoint)->Arg(16)->Arg(64)->Arg(256);

void BM_CodedDiffractionApplyAdjoint(benchmark::State& state) {
  const auto shape = square(state.range(0));
  RandomStream rng(2);
  const auto op = operators::make_cdp(shape, rng, 4);
  const Signal x = rng.normal(shape.size());
  for (auto _ : state) benchmark::DoNotOptimize(op.adjoint(op.apply(x)));
  state.SetItemsProcessed(state.iterations() * shape.size());
}
BENCHMARK(BM_CodedDiffractionApplyAdjoint)->Arg(16)->Arg(64)->Arg(128);

void BM_GmmDenoise(benchmark::State& state) {
  const Index d = 256;
  const auto g = mixture(d, static_cast<int>(state.range(0)));
  RandomStream rng(3);
  const Signal r = rng.normal(d);
  for (auto _ : state) benchmark::DoNotOptimize(priors::posterior_mean(g, r, 0.5));
}
BENCHMARK(BM_GmmDenoise)->Arg(4)->Arg(16)->Arg(64);

void BM_MmseUpdate(benchmark::State& state) {
  const auto shape = square(32);
  const auto op = LinearOperator::circular_convolution(shape, gaussian_kernel(9, 2.0));
  const auto op_svd = op.with_svd();
  RandomStream rng(4);
  const Signal x_bar = rng.normal(shape.size());
  const Measurement y = op.apply(rng.normal(shape.size()));
  const bool use_svd = state.range(0) != 0;
  fire::CgSettings cg;
  cg.speedup = false;
  for (auto _ : state) {
    if (use_svd) {
      benchmark::DoNotOptimize(fire::mmse_update_svd(y, op_svd, x_bar, 0.01, 0.1));
    } else {
      benchmark::DoNotOptimize(fire::mmse_update_cg(y, op, x_bar, 0.01, 0.1, cg));
    }
  }
  state.SetLabel(use_svd ? "svd" : "cg");
}
BENCHMARK(BM_MmseUpdate)->Arg(0)->Arg(1);

void BM_MagnitudeMoments(benchmark::State& state) {
  const auto method = state.range(0) == 0 ? glm::MagnitudeMethod::kQuadrature
                                          : glm::MagnitudeMethod::kLaplace;
  const std::complex<double> z_bar(3.0, -4.0);
  for (auto _ : state) benchmark::DoNotOptimize(glm::magnitude_moments(5.5, z_bar, 2.0, 0.3, method));
  state.SetLabel(state.range(0) == 0 ? "quadrature" : "laplace");
}
BENCHMARK(BM_MagnitudeMoments)->Arg(0)->Arg(1);

void BM_PlanSchedule(benchmark::State& state) {
  const auto sched = ddim::geometric_sigmas(1e-4, 1e4, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ddim::plan_schedule(4 * static_cast<int>(state.range(0)), 0.4, sched));
}
BENCHMARK(BM_PlanSchedule)->Arg(10)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
