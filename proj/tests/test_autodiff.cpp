#include <doctest.h>

#include "splitnet/autodiff.hpp"
#include "splitnet/error.hpp"
#include "splitnet/numerics.hpp"
#include "support.hpp"

using namespace splitnet;
using ad::Tape;
using ad::Var;
using testing::gradient_check;
using testing::random_tensor;

namespace {

constexpr double kTol = 1e-5;

// Weighted sum with fixed random weights: a generic scalar probe.
Var probe(Tape& t, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(y, t.constant(random_tensor(y.value().shape, rng))));
}

struct Shape {
  int c, r, k;
};

}  // namespace

TEST_CASE("backward basics") {
  Tape t;
  Var x = t.parameter(Tensor({2, 3, 3}, 0.7));
  t.backward(ad::sum(x));
  for (double g : x.grad()->data) CHECK(g == 1.0);

  Tape t2;
  Var y = t2.parameter(Tensor({1, 2, 2}, -1.0));
  Var c = t2.constant(Tensor({1, 2, 2}, 2.0));
  t2.backward(ad::sum(ad::add(ad::relu(y), c)));
  for (double g : y.grad()->data) CHECK(g == 0.0);
  CHECK(c.grad() == nullptr);

  Tape t3;
  Var z = t3.parameter(Tensor({1, 2, 2}, 1.0));
  CHECK_THROWS_AS(t3.backward(ad::relu(z)), ValidationError);
  Tape other;
  Var w = other.parameter(Tensor::scalar(1.0));
  CHECK_THROWS_AS(t3.backward(w), ValidationError);
}

TEST_CASE("relu subgradient at zero is zero") {
  Tape t;
  Var x = t.parameter(Tensor({1, 1, 3}, std::vector<double>{-1.0, 0.0, 2.0}));
  t.backward(ad::sum(ad::relu(x)));
  CHECK(x.grad()->data == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("activation ranges") {
  Tape t;
  Var x = t.constant(Tensor({1, 1, 6}, std::vector<double>{-1000, -40, -1e-3, 0, 40, 1000}));
  for (double v : ad::relu(x).value().data) CHECK(v >= 0.0);
  for (double v : ad::sigmoid(x).value().data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(ad::sigmoid(x).value().data[3] == 0.5);
}

TEST_CASE("conv2d_same shape errors") {
  Tape t;
  Var x = t.constant(Tensor({2, 4, 4}));
  CHECK_THROWS_AS(ad::conv2d_same(x, t.constant(Tensor({1, 2, 2, 2}))), ValidationError);
  CHECK_THROWS_AS(ad::conv2d_same(x, t.constant(Tensor({1, 3, 3, 3}))), ValidationError);
}

TEST_CASE("gradient check: convolution and bias") {
  std::mt19937_64 rng(1);
  for (const Shape s : {Shape{1, 4, 1}, Shape{3, 5, 3}, Shape{4, 8, 5}, Shape{2, 3, 3}}) {
    const Tensor x = random_tensor({s.c, s.r, s.r}, rng);
    const Tensor bank = random_tensor({3, s.c, s.k, s.k}, rng);
    const Tensor b = random_tensor({3}, rng);
    const auto res = gradient_check({x, bank, b}, [](Tape& t, const std::vector<Var>& p) {
      return probe(t, ad::add_bias(ad::conv2d_same(p[0], p[1]), p[2]), 11);
    });
    CHECK(res.worst <= kTol);
  }
}

TEST_CASE("gradient check: pointwise primitives") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({3, 6, 6}, rng, -2, 2);
  const Tensor y = random_tensor({3, 6, 6}, rng, -2, 2);
  const Tensor one = random_tensor({1, 6, 6}, rng, -2, 2);
  using P = const std::vector<Var>&;
  CHECK(gradient_check({x}, [](Tape& t, P p) { return probe(t, ad::relu(p[0]), 3); }).worst <= kTol);
  CHECK(gradient_check({x}, [](Tape& t, P p) { return probe(t, ad::sigmoid(p[0]), 3); }).worst <= kTol);
  CHECK(gradient_check({x, y}, [](Tape& t, P p) { return probe(t, ad::add(p[0], p[1]), 4); }).worst <= kTol);
  CHECK(gradient_check({x, y}, [](Tape& t, P p) { return probe(t, ad::sub(p[0], p[1]), 4); }).worst <= kTol);
  CHECK(gradient_check({x, y}, [](Tape& t, P p) { return probe(t, ad::mul(p[0], p[1]), 4); }).worst <= kTol);
  CHECK(gradient_check({x}, [](Tape&, P p) { return ad::sum(p[0]); }).worst <= kTol);
  CHECK(gradient_check({x}, [](Tape&, P p) { return ad::mean(ad::mul(p[0], p[0])); }).worst <= kTol);
  CHECK(gradient_check({x}, [](Tape& t, P p) { return probe(t, ad::center_scale(p[0], 0.5, 0.3), 5); }).worst <= kTol);
  CHECK(gradient_check({one, x}, [](Tape& t, P p) { return probe(t, ad::axpy(p[0], 0.7, p[1]), 6); }).worst <= kTol);
  CHECK(gradient_check({x, y}, [](Tape& t, P p) { return probe(t, ad::axpy(p[0], -1.3, p[1]), 6); }).worst <= kTol);
  CHECK(gradient_check({x, one}, [](Tape& t, P p) { return probe(t, ad::lincomb(0.5, p[0], 0.5, p[1]), 7); }).worst <=
        kTol);
  CHECK(gradient_check({x, y}, [](Tape& t, P p) { return probe(t, ad::lincomb(0.25, p[0], -2.0, p[1]), 7); }).worst <=
        kTol);
  CHECK(gradient_check({x}, [](Tape& t, P p) { return probe(t, ad::mean_over_pathways(p[0]), 8); }).worst <= kTol);
  CHECK(gradient_check({x, one}, [](Tape& t, P p) { return probe(t, ad::concat_channels(p[0], p[1]), 9); }).worst <=
        kTol);
}

TEST_CASE("gradient check: sampling primitives") {
  std::mt19937_64 rng(3);
  const Tensor fine = random_tensor({4, 8, 8}, rng);
  const Tensor coarse = random_tensor({4, 4, 4}, rng);
  const Tensor shared = random_tensor({1, 2, 2}, rng);
  const Tensor per = random_tensor({4, 2, 2}, rng);
  using P = const std::vector<Var>&;
  CHECK(gradient_check({fine}, [](Tape& t, P p) { return probe(t, ad::avgpool2(p[0]), 1); }).worst <= kTol);
  CHECK(gradient_check({fine}, [](Tape& t, P p) { return probe(t, ad::maxpool2(p[0]), 1); }).worst <= kTol);
  CHECK(gradient_check({coarse}, [](Tape& t, P p) { return probe(t, ad::upsample_nearest(p[0]), 2); }).worst <= kTol);
  CHECK(gradient_check({coarse, shared}, [](Tape& t, P p) { return probe(t, ad::transpose_conv2(p[0], p[1]), 2); })
            .worst <= kTol);
  CHECK(gradient_check({coarse, per}, [](Tape& t, P p) { return probe(t, ad::transpose_conv2(p[0], p[1]), 2); })
            .worst <= kTol);
}

TEST_CASE("maxpool routes gradient to the first maximum") {
  Tape t;
  Var x = t.parameter(Tensor({1, 2, 2}, std::vector<double>{3, 3, 1, 3}));
  Var y = ad::maxpool2(x);
  CHECK(y.value().data[0] == 3.0);
  t.backward(ad::sum(y));
  CHECK(x.grad()->data == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("gradient check: losses") {
  std::mt19937_64 rng(4);
  const Tensor u = random_tensor({1, 5, 5}, rng, 0.05, 0.95);
  Tensor g({1, 5, 5});
  std::bernoulli_distribution coin(0.5);
  for (double& v : g.data) v = coin(rng) ? 1.0 : 0.0;
  using P = const std::vector<Var>&;
  CHECK(gradient_check({u}, [&](Tape&, P p) { return ad::bce_loss(p[0], g); }).worst <= kTol);
  CHECK(gradient_check({u}, [&](Tape&, P p) { return ad::hinge_loss(p[0], g); }).worst <= kTol);
}

TEST_CASE("bce clamps and counts") {
  Tape t;
  std::size_t clamped = 0;
  Var u = t.constant(Tensor({1, 1, 4}, std::vector<double>{0.0, 1.0, 0.5, 1e-300}));
  const Tensor g({1, 1, 4}, std::vector<double>{1.0, 0.0, 1.0, 1.0});
  const double loss = ad::bce_loss(u, g, 1e-12, &clamped).value().data[0];
  CHECK(clamped == 3);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx((3 * -std::log(1e-12) + std::log(2.0)) / 4).epsilon(1e-6));
}

TEST_CASE("gradient check: logit fixed point") {
  std::mt19937_64 rng(6);
  const Tensor ubar = random_tensor({1, 4, 4}, rng, -1.5, 2.5);
  for (const double dt : {0.3, 2.0, 10.0}) {
    const auto res = gradient_check({ubar}, [dt](Tape& t, const std::vector<Var>& p) {
      return probe(t, ad::logit_fixed_point(p[0], dt, std::min(1.0, 2 * dt), 1e-15, 100000), 12);
    });
    CHECK(res.worst <= kTol);
  }
}

TEST_CASE("gradients are deterministic") {
  std::mt19937_64 rng(10);
  const Tensor x = random_tensor({3, 8, 8}, rng);
  const Tensor bank = random_tensor({4, 3, 3, 3}, rng);
  auto run = [&] {
    Tape t;
    Var xv = t.parameter(x), kv = t.parameter(bank);
    Var y = ad::maxpool2(ad::relu(ad::conv2d_same(xv, kv)));
    t.backward(probe(t, ad::mean_over_pathways(y), 3));
    std::vector<double> out = xv.grad()->data;
    out.insert(out.end(), kv.grad()->data.begin(), kv.grad()->data.end());
    return out;
  };
  CHECK(testing::bit_equal(run(), run()));
}
