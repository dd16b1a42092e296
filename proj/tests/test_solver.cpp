#include <doctest.h>

#include "splitnet/error.hpp"
#include "splitnet/kernels.hpp"
#include "splitnet/model.hpp"
#include "splitnet/solver.hpp"
#include "splitnet/verification.hpp"
#include "support.hpp"

using namespace splitnet;
using testing::random_field;
using testing::random_tensor;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

SolverConfig small_config(int levels, std::vector<int> widths, std::vector<int> substeps) {
  SolverConfig cfg;
  cfg.levels = levels;
  cfg.widths = std::move(widths);
  cfg.substeps = std::move(substeps);
  cfg.kernel_sizes.assign(static_cast<std::size_t>(levels), 3);
  cfg.dt = 0.5;
  return cfg;
}

std::vector<double> stack(const std::vector<Field>& parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.values.begin(), p.values.end());
  return out;
}

}  // namespace

TEST_CASE("mean over pathways") {
  Field f(GridSpec{1, 1, 2, 1.0}, 3, std::vector<double>{1, 2, 3, 4, 5, 9});
  CHECK(mean_over_pathways(f).values == std::vector<double>{3, 5});
}

TEST_CASE("sub-step with zero controls averages the inputs") {
  std::mt19937_64 rng(1);
  const Field u = random_field(3, 4, 4, rng);
  const Tensor k({2, 3, 3, 3}), b({2});
  const SubstepSpec spec{4.0, std::cref(k), std::cref(b), Activation::relu_projection, 3};
  const Field out = solve_substep(u, spec, 0.3);
  CHECK(out.channels == 2);
  const Field m = mean_over_pathways(u);
  for (int c = 0; c < 2; ++c)
    for (std::size_t p = 0; p < m.values.size(); ++p) CHECK(out.channel(c)[p] == m.values[p]);
}

TEST_CASE("sub-step with a large negative bias projects to zero") {
  std::mt19937_64 rng(2);
  const Field u = random_field(2, 4, 4, rng);
  const Tensor k({1, 2, 3, 3}), b({1}, -10.0);
  const SubstepSpec spec{1.0, std::cref(k), std::cref(b), Activation::relu_projection, 2};
  for (double v : solve_substep(u, spec, 1.0).values) CHECK(v == 0.0);
}

TEST_CASE("sub-step equals the convolution oracle followed by a clamp") {
  std::mt19937_64 rng(3);
  const Field u = random_field(2, 4, 4, rng);
  const Tensor k = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng, -0.2, 0.2);
  const double gamma = 2.0, dt = 0.4;
  const SubstepSpec spec{gamma, std::cref(k), std::cref(b), Activation::relu_projection, 2};
  const Field got = solve_substep(u, spec, dt);
  const Tensor conv = reference_conv2d(u.to_tensor(), k);
  const Field m = mean_over_pathways(u);
  for (int o = 0; o < 3; ++o)
    for (std::size_t p = 0; p < 16; ++p) {
      const double ubar = m.values[p] + gamma * dt * (conv.data[o * 16 + p] + b.data[static_cast<std::size_t>(o)]);
      CHECK(got.channel(o)[p] == doctest::Approx(std::max(ubar, 0.0)).epsilon(1e-14));
    }
}

TEST_CASE("sub-step specs are validated") {
  const Tensor k({2, 3, 3, 3}), b({2}), b_bad({3});
  const Field u(GridSpec{1, 4, 4, 1.0}, 2);
  const SubstepSpec wrong_inputs{1.0, std::cref(k), std::cref(b), Activation::relu_projection, 3};
  CHECK_THROWS_AS(solve_substep(u, wrong_inputs, 0.1), ValidationError);
  const SubstepSpec wrong_bias{1.0, std::cref(k), std::cref(b_bad), Activation::relu_projection, 3};
  CHECK_THROWS_AS(wrong_bias.validate(), ValidationError);
  const SubstepSpec bad_gamma{0.0, std::cref(k), std::cref(b), Activation::relu_projection, 3};
  CHECK_THROWS_AS(bad_gamma.validate(), ValidationError);
}

TEST_CASE("pathways computed one at a time in reverse order give identical output") {
  std::mt19937_64 rng(4);
  const Field u = random_field(4, 8, 8, rng);
  const Tensor k = random_tensor({5, 4, 3, 3}, rng, -0.3, 0.3), b = random_tensor({5}, rng, -0.1, 0.1);
  const SubstepSpec spec{2.0, std::cref(k), std::cref(b), Activation::relu_projection, 4};
  const Field full = solve_substep(u, spec, 0.25);
  std::vector<Field> parts(5);
  for (int o = 4; o >= 0; --o) {
    Tensor ko({1, 4, 3, 3});
    std::copy_n(k.data.begin() + o * 36, 36, ko.data.begin());
    const Tensor bo({1}, b.data[static_cast<std::size_t>(o)]);
    parts[static_cast<std::size_t>(o)] =
        solve_substep(u, SubstepSpec{2.0, std::cref(ko), std::cref(bo), Activation::relu_projection, 4}, 0.25);
  }
  CHECK(testing::bit_equal(stack(parts), full.values));
}

TEST_CASE("final step policies") {
  const Tensor k({1, 2, 3, 3}), b({1});
  const SubstepSpec spec{1.0, std::cref(k), std::cref(b), Activation::sigmoid_implicit, 2};
  const Field half(GridSpec{1, 2, 2, 1.0}, 2, 0.5);
  const FinalResult two = solve_final(half, spec, 0.3, FinalPolicy{});
  for (double v : two.value.values) CHECK(v == 0.5);

  const Field u(GridSpec{1, 2, 2, 1.0}, 2, 0.7);
  FinalPolicy it;
  it.mode = FinalMode::iterate;
  it.damping = 0.5;
  it.tol = 1e-13;
  const FinalResult res = solve_final(u, spec, 10.0, it);
  CHECK(res.converged);
  const double oracle = fixed_point_oracle(0.7, 10.0);
  for (double p : res.value.values) {
    CHECK(std::abs(p - oracle) <= 1e-10);
    CHECK(std::abs((p - 0.7) / 10.0 + std::log(p / (1 - p))) <= 1e-10);
  }

  it.max_iter = 2;
  it.tol = 0.0;
  const FinalResult cut = solve_final(u, spec, 10.0, it);
  CHECK_FALSE(cut.converged);
  CHECK(cut.iterations == 2);

  const SubstepSpec scaled{2.0, std::cref(k), std::cref(b), Activation::sigmoid_implicit, 2};
  CHECK_THROWS_AS(solve_final(u, scaled, 1.0, FinalPolicy{}), ValidationError);
}

TEST_CASE("relaxation modes") {
  GridPyramid pyr(4, 4, 2);
  const Field skip_a(pyr.level(1), 2, 0.3), coarse_a(pyr.level(2), 3, 0.3);
  for (double v : relaxation(pyr, coarse_a, skip_a, RelaxMode::skip_average).values) CHECK(v == 0.3);

  const Field ones(pyr.level(1), 2, 1.0), zeros(pyr.level(2), 3, 0.0);
  const Field half = relaxation(pyr, zeros, ones, RelaxMode::skip_average);
  CHECK(half.channels == 2);
  for (double v : half.values) CHECK(v == 0.5);

  std::mt19937_64 rng(5);
  const Field skip = random_field(2, 4, 4, rng);
  const Field coarse = random_field(2, 2, 2, rng, 0, 1, 2);
  const Field cat = relaxation(pyr, coarse, skip, RelaxMode::concat);
  CHECK(cat.channels == 4);
  const Field up = upsample_nearest(pyr, coarse);
  CHECK(std::equal(skip.values.begin(), skip.values.end(), cat.values.begin()));
  CHECK(std::equal(up.values.begin(), up.values.end(), cat.values.begin() + 32));

  const Field coarse3 = random_field(3, 2, 2, rng, 0, 1, 2);
  const Field lit = relaxation(pyr, coarse3, skip, RelaxMode::paper_literal);
  CHECK(lit.channels == 3);
  const Field up3 = upsample_nearest(pyr, coarse3), upm = upsample_nearest(pyr, mean_over_pathways(coarse3));
  for (int c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 16; ++p)
      CHECK(lit.channel(c)[p] == doctest::Approx(0.5 * up3.channel(c)[p] + 0.5 * upm.values[p]).epsilon(1e-15));

  CHECK_THROWS_AS(relaxation(pyr, coarse, random_field(2, 2, 2, rng, 0, 1, 2), RelaxMode::skip_average),
                  ValidationError);
}

TEST_CASE("zero controls propagate a constant through the V-cycle") {
  for (int levels = 1; levels <= 4; ++levels) {
    for (const UpMode up : {UpMode::nearest, UpMode::transpose_conv}) {
      SolverConfig cfg = small_config(levels, std::vector<int>(static_cast<std::size_t>(levels), 2),
                                      std::vector<int>(static_cast<std::size_t>(levels), 2));
      cfg.up = up;
      cfg.down = DownMode::max;
      const ControlVariables theta = ControlVariables::zeros(cfg);
      const double u0 = 0.8;
      const Field out = vcycle_step(Field(GridSpec{1, 16, 16, 1.0}, 1, u0), theta.steps[0], cfg);
      for (double v : out.values) CHECK(v == doctest::Approx(logistic((u0 - 0.5) / cfg.dt)).epsilon(1e-15));
    }
  }
}

TEST_CASE("single-level V-cycle is one sub-step plus the final solve") {
  const SolverConfig cfg = small_config(1, {1}, {1});
  const ControlVariables theta = ControlVariables::random(cfg, 3);
  std::mt19937_64 rng(6);
  const Field u = random_field(1, 8, 8, rng);
  const StepControls& s = theta.steps[0];
  const Field v = solve_substep(
      u, SubstepSpec{cfg.left_gamma(1), std::cref(s.left_kernels[0][0]), std::cref(s.left_bias[0][0]),
                     Activation::relu_projection, 1},
      cfg.dt);
  const Field want =
      solve_final(v, SubstepSpec{1.0, std::cref(s.final_kernel), std::cref(s.final_bias), Activation::sigmoid_implicit, 1},
                  cfg.dt, cfg.final_policy)
          .value;
  CHECK(testing::bit_equal(vcycle_step(u, s, cfg).values, want.values));
}

TEST_CASE("two-level V-cycle matches a hand-unrolled composition") {
  SolverConfig cfg = small_config(2, {1, 2}, {1, 1});
  const ControlVariables theta = ControlVariables::random(cfg, 8);
  const StepControls& s = theta.steps[0];
  std::mt19937_64 rng(7);
  const Field u = random_field(1, 8, 8, rng);
  const GridPyramid pyr = make_pyramid(cfg, 8, 8);
  auto relu_spec = [](double g, const Tensor& k, const Tensor& b, int inputs) {
    return SubstepSpec{g, std::cref(k), std::cref(b), Activation::relu_projection, inputs};
  };
  const Field v1 = solve_substep(u, relu_spec(1.0 * 1, s.left_kernels[0][0], s.left_bias[0][0], 1), cfg.dt);
  const Field v2 = solve_substep(downsample(pyr, v1), relu_spec(2.0 * 2, s.left_kernels[1][0], s.left_bias[1][0], 1),
                                 cfg.dt);
  const Field r = relaxation(pyr, v2, v1, RelaxMode::skip_average);
  const Field w = solve_substep(r, relu_spec(1.0 * 1, s.right_kernels[0][0], s.right_bias[0][0], 1), cfg.dt);
  const Field want =
      solve_final(w, SubstepSpec{1.0, std::cref(s.final_kernel), std::cref(s.final_bias), Activation::sigmoid_implicit, 1},
                  cfg.dt, cfg.final_policy)
          .value;
  CHECK(testing::bit_equal(vcycle_step(u, s, cfg).values, want.values));
}

TEST_CASE("V-cycle output is identical across executors and thread counts") {
  SolverConfig cfg = small_config(3, {3, 4, 5}, {2, 2, 1});
  cfg.down = DownMode::max;
  cfg.up = UpMode::transpose_conv;
  const ControlVariables theta = ControlVariables::random(cfg, 12);
  std::mt19937_64 rng(8);
  const Field u = random_field(1, 16, 16, rng);
  kernels::set_default_exec(kernels::Exec::serial);
  const Field ref = vcycle_step(u, theta.steps[0], cfg);
  kernels::set_default_exec(kernels::Exec::parallel);
  for (int threads : {1, 2, 3, 4}) {
    kernels::set_thread_limit(threads);
    CHECK(testing::bit_equal(vcycle_step(u, theta.steps[0], cfg).values, ref.values));
  }
  kernels::set_thread_limit(0);
}

TEST_CASE("intermediates stay non-negative and the output stays in (0, 1)") {
  for (const RelaxMode mode : {RelaxMode::skip_average, RelaxMode::paper_literal, RelaxMode::concat}) {
    SolverConfig cfg = small_config(3, {2, 3, 4}, {2, 1, 2});
    cfg.relax = mode;
    cfg.dt = 0.05;
    const ControlVariables theta = ControlVariables::random(cfg, 21);
    std::mt19937_64 rng(9);
    ad::Tape t;
    const auto vars = tape::bind(t, theta.steps[0], false);
    tape::Trace trace;
    const ad::Var out = tape::vcycle_step(t.constant(random_field(1, 16, 16, rng).to_tensor()), vars, cfg, &trace);
    CHECK(trace.entries.size() == 5 + 3 + 1);
    for (const auto& e : trace.entries)
      for (double v : e.pathways.value().data) CHECK(v >= 0.0);
    for (double v : out.value().data) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("overflowing pre-activations abort with the sub-step named") {
  SolverConfig cfg = small_config(2, {2, 2}, {1, 1});
  ControlVariables theta = ControlVariables::zeros(cfg);
  for (double& v : theta.steps[0].left_kernels[1][0].data) v = 1e308;
  const Field u(GridSpec{1, 8, 8, 1.0}, 1, 0.9);
  try {
    vcycle_step(u, theta.steps[0], cfg);
    FAIL("expected an invariant violation");
  } catch (const InvariantViolation& e) {
    CHECK(std::string(e.what()).find("left j=2 l=1") != std::string::npos);
  }
}
