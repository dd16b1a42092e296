#include <doctest.h>

#include <numeric>

#include "splitnet/kernels.hpp"
#include "splitnet/verification.hpp"
#include "support.hpp"

using namespace splitnet;
using kernels::Exec;
using kernels::Planes;

namespace {

std::vector<double> rand_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

struct ThreadLimit {
  explicit ThreadLimit(int n) { kernels::set_thread_limit(n); }
  ~ThreadLimit() { kernels::set_thread_limit(0); }
};

// Runs fn once per executor and thread count; every run must match the
// serial result bit for bit.
template <class Fn>
void expect_identical(Fn fn) {
  const std::vector<double> ref = fn(kernels::table(Exec::serial));
  for (int threads : {1, 2, 3, 4, 7}) {
    ThreadLimit lim(threads);
    CHECK(testing::bit_equal(fn(kernels::table(Exec::parallel)), ref));
  }
}

}  // namespace

TEST_CASE("serial and parallel kernels agree bit for bit") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> chans(1, 6), side(1, 4), ksel(0, 2);
  for (int trial = 0; trial < 25; ++trial) {
    const int cin = chans(rng), cout = chans(rng), k = 1 + 2 * ksel(rng);
    const Planes xd{cin, 1 << side(rng), 1 << side(rng)};
    const Planes od{cout, xd.rows, xd.cols};
    const Planes coarse{cin, xd.rows / 2 > 0 ? xd.rows / 2 : 1, xd.cols / 2 > 0 ? xd.cols / 2 : 1};
    const Planes fine{cin, coarse.rows * 2, coarse.cols * 2};
    const auto x = rand_vec(static_cast<std::size_t>(xd.size()), rng);
    const auto bank = rand_vec(static_cast<std::size_t>(cout * cin * k * k), rng);
    const auto gout = rand_vec(static_cast<std::size_t>(od.size()), rng);
    const auto xf = rand_vec(static_cast<std::size_t>(fine.size()), rng);
    const auto xc = rand_vec(static_cast<std::size_t>(coarse.size()), rng);
    const auto kern1 = rand_vec(4, rng);
    const auto kernc = rand_vec(static_cast<std::size_t>(4 * cin), rng);

    expect_identical([&](const kernels::KernelTable& t) {
      std::vector<double> out(static_cast<std::size_t>(od.size()), 0.5);
      t.conv2d_same(x, xd, bank, cout, k, out, trial % 2 == 0);
      return out;
    });
    expect_identical([&](const kernels::KernelTable& t) {
      std::vector<double> gx(static_cast<std::size_t>(xd.size()), 0.25);
      t.conv2d_same_grad_input(gout, xd, bank, cout, k, gx);
      return gx;
    });
    expect_identical([&](const kernels::KernelTable& t) {
      std::vector<double> gb(bank.size(), -0.5);
      t.conv2d_same_grad_kernel(gout, x, xd, cout, k, gb);
      return gb;
    });
    expect_identical([&](const kernels::KernelTable& t) {
      std::vector<double> out(static_cast<std::size_t>(coarse.size()));
      t.avgpool2(xf, fine, out);
      std::vector<double> gx(xf.size(), 0.0);
      t.avgpool2_grad(out, fine, gx);
      out.insert(out.end(), gx.begin(), gx.end());
      return out;
    });
    expect_identical([&](const kernels::KernelTable& t) {
      std::vector<double> out(static_cast<std::size_t>(coarse.size()));
      std::vector<int> arg(out.size());
      t.maxpool2(xf, fine, out, arg);
      std::vector<double> gx(xf.size(), 0.0);
      t.maxpool2_grad(xc, arg, coarse, gx);
      out.insert(out.end(), gx.begin(), gx.end());
      for (int a : arg) out.push_back(a);
      return out;
    });
    expect_identical([&](const kernels::KernelTable& t) {
      std::vector<double> out(xf.size());
      t.upsample_nearest(xc, coarse, out);
      std::vector<double> gx(xc.size(), 0.0);
      t.upsample_nearest_grad(xf, coarse, gx);
      out.insert(out.end(), gx.begin(), gx.end());
      return out;
    });
    for (int kc : {1, cin}) {
      const auto& kern = kc == 1 ? kern1 : kernc;
      expect_identical([&](const kernels::KernelTable& t) {
        std::vector<double> out(xf.size());
        t.transpose_conv2(xc, coarse, kern, kc, out);
        std::vector<double> gx(xc.size(), 0.0), gk(kern.size(), 0.0);
        t.transpose_conv2_grad_input(xf, coarse, kern, kc, gx);
        t.transpose_conv2_grad_kernel(xf, xc, coarse, kc, gk);
        out.insert(out.end(), gx.begin(), gx.end());
        out.insert(out.end(), gk.begin(), gk.end());
        return out;
      });
    }
  }
}

TEST_CASE("convolution matches the direct-summation oracle") {
  std::mt19937_64 rng(17);
  for (const Exec e : {Exec::serial, Exec::parallel}) {
    const auto& t = kernels::table(e);
    const Tensor x = testing::random_tensor({2, 5, 5}, rng);
    const Tensor bank = testing::random_tensor({3, 2, 3, 3}, rng);
    std::vector<double> out(75);
    t.conv2d_same(x.data, {2, 5, 5}, bank.data, 3, 3, out, false);
    CHECK(testing::max_abs_diff(out, reference_conv2d(x, bank).data) < 1e-14);

    // Centred delta kernel is the identity; zero kernels give zero.
    Tensor delta({1, 1, 3, 3});
    delta.data[4] = 1.0;
    std::vector<double> id(25);
    t.conv2d_same(std::span<const double>(x.data).subspan(0, 25), {1, 5, 5}, delta.data, 1, 3, id, false);
    CHECK(testing::bit_equal(id, std::vector<double>(x.data.begin(), x.data.begin() + 25)));
    std::vector<double> zero(25, 3.0);
    t.conv2d_same(std::span<const double>(x.data).subspan(0, 25), {1, 5, 5}, std::vector<double>(9, 0.0), 1, 3, zero,
                  false);
    for (double v : zero) CHECK(v == 0.0);
  }
}

TEST_CASE("kernel adjoints satisfy the inner-product identity") {
  std::mt19937_64 rng(71);
  const auto& t = kernels::table(Exec::parallel);
  const Planes xd{3, 8, 4}, coarse{3, 4, 2};
  const auto x = rand_vec(96, rng), y = rand_vec(64, rng);
  const auto bank = rand_vec(2 * 3 * 25, rng);

  std::vector<double> ax(64);
  t.conv2d_same(x, xd, bank, 2, 5, ax, false);
  std::vector<double> aty(96, 0.0);
  t.conv2d_same_grad_input(y, xd, bank, 2, 5, aty);
  CHECK(dot(ax, y) == doctest::Approx(dot(x, aty)).epsilon(1e-13));

  const auto c = rand_vec(24, rng);
  std::vector<double> px(24), ptc(96, 0.0);
  t.avgpool2(x, xd, px);
  t.avgpool2_grad(c, xd, ptc);
  CHECK(dot(px, c) == doctest::Approx(dot(x, ptc)).epsilon(1e-13));

  std::vector<double> uc(96), utx(24, 0.0);
  t.upsample_nearest(c, coarse, uc);
  t.upsample_nearest_grad(x, coarse, utx);
  CHECK(dot(uc, x) == doctest::Approx(dot(c, utx)).epsilon(1e-13));

  const auto kern = rand_vec(12, rng);
  std::vector<double> tc(96), ttx(24, 0.0);
  t.transpose_conv2(c, coarse, kern, 3, tc);
  t.transpose_conv2_grad_input(x, coarse, kern, 3, ttx);
  CHECK(dot(tc, x) == doctest::Approx(dot(c, ttx)).epsilon(1e-13));
}

TEST_CASE("thread limit round-trips") {
  kernels::set_thread_limit(3);
  CHECK(kernels::thread_limit() == 3);
  kernels::set_thread_limit(-2);
  CHECK(kernels::thread_limit() == 0);
}
