// Serial reference kernels against their OpenMP counterparts.
// Arg(0) selects the serial table, Arg(1) the parallel one.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "splitnet/kernels.hpp"
#include "splitnet/model.hpp"

using namespace splitnet;
using kernels::Exec;
using kernels::Planes;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

const kernels::KernelTable& pick(const benchmark::State& s) {
  return kernels::table(s.range(0) == 0 ? Exec::serial : Exec::parallel);
}

void label(benchmark::State& s) { s.SetLabel(s.range(0) == 0 ? "serial" : "parallel"); }

constexpr int kCin = 16, kCout = 16, kSide = 64, kK = 3;

void BM_conv2d(benchmark::State& s) {
  const Planes xd{kCin, kSide, kSide};
  const auto x = noise(static_cast<std::size_t>(xd.size()), 1);
  const auto bank = noise(static_cast<std::size_t>(kCout * kCin * kK * kK), 2);
  std::vector<double> out(static_cast<std::size_t>(kCout * kSide * kSide));
  const auto& t = pick(s);
  for (auto _ : s) {
    t.conv2d_same(x, xd, bank, kCout, kK, out, false);
    benchmark::DoNotOptimize(out.data());
  }
  label(s);
}

void BM_conv2d_grad_kernel(benchmark::State& s) {
  const Planes xd{kCin, kSide, kSide};
  const auto x = noise(static_cast<std::size_t>(xd.size()), 3);
  const auto g = noise(static_cast<std::size_t>(kCout * kSide * kSide), 4);
  std::vector<double> gb(static_cast<std::size_t>(kCout * kCin * kK * kK));
  const auto& t = pick(s);
  for (auto _ : s) {
    t.conv2d_same_grad_kernel(g, x, xd, kCout, kK, gb);
    benchmark::DoNotOptimize(gb.data());
  }
  label(s);
}

void BM_conv2d_grad_input(benchmark::State& s) {
  const Planes xd{kCin, kSide, kSide};
  const auto g = noise(static_cast<std::size_t>(kCout * kSide * kSide), 5);
  const auto bank = noise(static_cast<std::size_t>(kCout * kCin * kK * kK), 6);
  std::vector<double> gx(static_cast<std::size_t>(xd.size()));
  const auto& t = pick(s);
  for (auto _ : s) {
    t.conv2d_same_grad_input(g, xd, bank, kCout, kK, gx);
    benchmark::DoNotOptimize(gx.data());
  }
  label(s);
}

void BM_maxpool2(benchmark::State& s) {
  const Planes xd{kCin, 2 * kSide, 2 * kSide};
  const auto x = noise(static_cast<std::size_t>(xd.size()), 7);
  std::vector<double> out(static_cast<std::size_t>(kCin * kSide * kSide));
  std::vector<int> arg(out.size());
  const auto& t = pick(s);
  for (auto _ : s) {
    t.maxpool2(x, xd, out, arg);
    benchmark::DoNotOptimize(out.data());
  }
  label(s);
}

void BM_transpose_conv2(benchmark::State& s) {
  const Planes cd{kCin, kSide, kSide};
  const auto x = noise(static_cast<std::size_t>(cd.size()), 8);
  const auto kern = noise(4, 9);
  std::vector<double> out(static_cast<std::size_t>(4 * cd.size()));
  const auto& t = pick(s);
  for (auto _ : s) {
    t.transpose_conv2(x, cd, kern, 1, out);
    benchmark::DoNotOptimize(out.data());
  }
  label(s);
}

// Whole solver step of the scaled preset on one 64x64 image.
void BM_forward(benchmark::State& s) {
  const SolverConfig cfg = unet_preset(1.0 / 16.0);
  const ControlVariables theta = ControlVariables::random(cfg, 1);
  Field image(GridSpec{1, 64, 64, 1.0}, 3, noise(3 * 64 * 64, 10));
  for (double& v : image.values) v = 0.5 + 0.5 * v;
  kernels::set_default_exec(s.range(0) == 0 ? Exec::serial : Exec::parallel);
  for (auto _ : s) benchmark::DoNotOptimize(forward(image, theta, cfg).values.data());
  kernels::set_default_exec(Exec::parallel);
  label(s);
}

}  // namespace

BENCHMARK(BM_conv2d)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv2d_grad_kernel)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv2d_grad_input)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_maxpool2)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_transpose_conv2)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
