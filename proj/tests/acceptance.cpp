// Acceptance run: one pass/fail line per criterion, non-zero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "splitnet/error.hpp"
#include "splitnet/model.hpp"
#include "splitnet/training.hpp"
#include "splitnet/verification.hpp"
#include "support.hpp"

using namespace splitnet;
using ad::Tape;
using ad::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

int failures = 0;

void report(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double t = seconds(t0);
  const bool in_time = budget_s <= 0 || t <= budget_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << " [" << fmt(t) << " s"
            << (budget_s > 0 ? " of " + fmt(budget_s) : std::string()) << "]" << std::endl;
}

// --- 1 -------------------------------------------------------------------------

Outcome building_block() {
  const EquivalenceReport rep = equivalence_sweep(1000, 2024, 16, 8);
  return {rep.trials >= 1000 && rep.max_deviation <= 1e-12,
          std::to_string(rep.trials) + " specs, max deviation " + fmt(rep.max_deviation)};
}

// --- 2 -------------------------------------------------------------------------

Outcome architecture() {
  const AuditReport rep = architecture_audit(unet_preset());
  int passed = 0;
  std::string failed;
  for (const auto& c : rep.checks) {
    if (c.pass) {
      ++passed;
    } else {
      failed += " " + c.name;
    }
  }
  return {rep.pass(), std::to_string(passed) + "/" + std::to_string(rep.checks.size()) + " structural checks" +
                          (failed.empty() ? "" : "; failed:" + failed)};
}

// --- 3 -------------------------------------------------------------------------

Outcome convergence() {
  const auto dts = dyadic_steps(1.0, 4, 8);
  const ConvergenceReport scalar = convergence_study(scalar_decay_problem(), dts);
  const ConvergenceReport diag = convergence_study(diagonal_two_stage_problem(4, 4), dts);
  auto ok = [](const ConvergenceReport& r) { return !r.degenerate && r.slope >= 0.8 && r.slope <= 1.2; };
  return {ok(scalar) && ok(diag), "slopes scalar " + fmt(scalar.slope) + ", two-stage " + fmt(diag.slope)};
}

// --- 4 -------------------------------------------------------------------------

Var probe(Tape& t, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(y, t.constant(testing::random_tensor(y.value().shape, rng))));
}

Outcome gradients() {
  using P = const std::vector<Var>&;
  std::mt19937_64 rng(4);
  auto rt = [&](std::vector<int> s, double lo = -1, double hi = 1) { return testing::random_tensor(std::move(s), rng, lo, hi); };
  const Tensor x = rt({3, 8, 8}), y = rt({3, 8, 8}), one = rt({1, 8, 8}), coarse = rt({3, 4, 4});
  const Tensor bank = rt({2, 3, 3, 3}), bias = rt({3}), shared = rt({1, 2, 2}), per = rt({3, 2, 2});
  const Tensor u = rt({1, 6, 6}, 0.05, 0.95);
  Tensor g({1, 6, 6});
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = (i * 7) % 3 == 0 ? 1.0 : 0.0;

  struct Case {
    const char* name;
    std::vector<Tensor> params;
    testing::LossBuilder build;
  };
  const std::vector<Case> cases = {
      {"conv2d_same", {x, bank}, [](Tape& t, P p) { return probe(t, ad::conv2d_same(p[0], p[1]), 1); }},
      {"add_bias", {x, bias}, [](Tape& t, P p) { return probe(t, ad::add_bias(p[0], p[1]), 2); }},
      {"relu", {x}, [](Tape& t, P p) { return probe(t, ad::relu(p[0]), 3); }},
      {"sigmoid", {x}, [](Tape& t, P p) { return probe(t, ad::sigmoid(p[0]), 3); }},
      {"axpy", {one, x}, [](Tape& t, P p) { return probe(t, ad::axpy(p[0], 0.7, p[1]), 4); }},
      {"lincomb", {x, y}, [](Tape& t, P p) { return probe(t, ad::lincomb(0.5, p[0], -1.5, p[1]), 5); }},
      {"center_scale", {x}, [](Tape& t, P p) { return probe(t, ad::center_scale(p[0], 0.5, 0.3), 6); }},
      {"mean_over_pathways", {x}, [](Tape& t, P p) { return probe(t, ad::mean_over_pathways(p[0]), 7); }},
      {"avgpool2", {x}, [](Tape& t, P p) { return probe(t, ad::avgpool2(p[0]), 8); }},
      {"maxpool2", {x}, [](Tape& t, P p) { return probe(t, ad::maxpool2(p[0]), 8); }},
      {"upsample_nearest", {coarse}, [](Tape& t, P p) { return probe(t, ad::upsample_nearest(p[0]), 9); }},
      {"transpose_conv2 shared", {coarse, shared}, [](Tape& t, P p) { return probe(t, ad::transpose_conv2(p[0], p[1]), 9); }},
      {"transpose_conv2 per-channel", {coarse, per}, [](Tape& t, P p) { return probe(t, ad::transpose_conv2(p[0], p[1]), 9); }},
      {"concat_channels", {x, one}, [](Tape& t, P p) { return probe(t, ad::concat_channels(p[0], p[1]), 10); }},
      {"add", {x, y}, [](Tape& t, P p) { return probe(t, ad::add(p[0], p[1]), 11); }},
      {"sub", {x, y}, [](Tape& t, P p) { return probe(t, ad::sub(p[0], p[1]), 11); }},
      {"mul", {x, y}, [](Tape& t, P p) { return probe(t, ad::mul(p[0], p[1]), 11); }},
      {"sum", {x}, [](Tape&, P p) { return ad::sum(p[0]); }},
      {"mean", {x}, [](Tape&, P p) { return ad::mean(ad::mul(p[0], p[0])); }},
      {"bce_loss", {u}, [&](Tape&, P p) { return ad::bce_loss(p[0], g); }},
      {"hinge_loss", {u}, [&](Tape&, P p) { return ad::hinge_loss(p[0], g); }},
      {"logit_fixed_point", {one},
       [](Tape& t, P p) { return probe(t, ad::logit_fixed_point(p[0], 2.0, 1.0, 1e-15, 100000), 12); }},
  };

  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    const double e = testing::gradient_check(c.params, c.build).worst;
    if (e > worst) {
      worst = e;
      worst_name = c.name;
    }
  }

  SolverConfig cfg;
  cfg.levels = 2;
  cfg.widths = {2, 2};
  cfg.substeps = {1, 1};
  cfg.kernel_sizes = {3, 3};
  cfg.dt = 0.5;
  ControlVariables theta = ControlVariables::random(cfg, 9);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  for_each_tensor(theta, cfg, [&](const TensorInfo&, Tensor& t) {
    for (double& v : t.data) v += jitter(rng);
  });
  const Tensor image = rt({3, 8, 8}, 0, 1);
  Tensor target({1, 8, 8});
  for (std::size_t i = 0; i < target.size(); ++i) target.data[i] = (i / 8 + i % 8) % 3 == 0 ? 1.0 : 0.0;
  const auto full = testing::model_gradient_check(theta, cfg, image, target);

  const bool ok = worst <= 1e-5 && full.worst <= 1e-5;
  return {ok, std::to_string(cases.size()) + " primitives, worst " + fmt(worst) + " (" + worst_name +
                  "); full forward " + fmt(full.worst) + " over " + std::to_string(full.checked) + " parameters"};
}

// --- 5 -------------------------------------------------------------------------

Outcome sampling() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> side(1, 5), chans(1, 4);
  int trials = 0;
  bool ok = true;
  for (int t = 0; t < 200; ++t) {
    const int rows = 1 << side(rng), cols = 1 << side(rng);
    const GridPyramid pyr(rows, cols, 2);
    const Field coarse = testing::random_field(chans(rng), rows / 2, cols / 2, rng, -1, 1, 2);
    const Field round = downsample_avg(pyr, upsample_nearest(pyr, coarse));
    ok = ok && testing::bit_equal(round.values, coarse.values);
    const std::vector<double> ones(4, 1.0);
    ok = ok && testing::bit_equal(upsample_transpose_conv(pyr, coarse, ones).values,
                                  upsample_nearest(pyr, coarse).values);
    ++trials;
  }
  return {ok, std::to_string(trials) + " random fields up to 32x32, both identities exact"};
}

// --- 6 -------------------------------------------------------------------------

Outcome fixed_point() {
  std::vector<double> ubars;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(-10, 10);
  for (int i = 0; i < 40; ++i) ubars.push_back(d(rng));
  ubars.push_back(0.5);
  const FixedPointReport rep = fixedpoint_diagnostics(ubars, {4, 8, 16, 64, 256}, 0.0);
  double worst_res = 0.0, worst_oracle = 0.0;
  bool converged = true;
  for (const auto& p : rep.probes) {
    worst_res = std::max(worst_res, p.residual);
    worst_oracle = std::max(worst_oracle, p.oracle_error);
    converged = converged && p.converged;
  }
  const bool ok = rep.first_iterate_half && converged && worst_res <= 1e-10 && worst_oracle <= 1e-10;
  return {ok, std::string("p1 = 0.5 ") + (rep.first_iterate_half ? "exactly" : "violated") + "; " +
                  std::to_string(rep.probes.size()) + " probes, max residual " + fmt(worst_res) +
                  ", max oracle error " + fmt(worst_oracle)};
}

// --- 7 and 8 -------------------------------------------------------------------------

constexpr int kEpochs = 100;
constexpr double kIouBound = 0.9;

struct TrainingRun {
  bool done = false;
  std::string error;
  TrainResult result;
  double heldout_iou = 0.0;
  bool traces_ok = true;
  std::string trace_detail;
};

TrainingRun& training_run() {
  static TrainingRun run;
  if (run.done) return run;
  run.done = true;
  const SolverConfig cfg = unet_preset(1.0 / 16.0);
  ShapesSpec spec;
  spec.size = 64;
  const auto train_set = generate_shapes(200, spec, 1, cfg.levels);
  const auto heldout = generate_shapes(50, spec, 2, cfg.levels);
  TrainConfig tc;
  tc.epochs = kEpochs;
  tc.batch_size = 8;
  tc.learning_rate = 1e-3;
  tc.seed = 1;
  tc.init_seed = 1;
  try {
    run.result = train(cfg, ControlVariables::random(cfg, tc.init_seed), train_set, {}, tc);
    run.heldout_iou = evaluate(run.result.theta, cfg, heldout, tc.loss).iou;

    double min_pathway = std::numeric_limits<double>::infinity();
    double lo = 1.0, hi = 0.0;
    std::size_t entries = 0;
    for (const auto& s : heldout) {
      Tape t;
      const auto vars = tape::bind(t, run.result.theta, false);
      tape::Trace trace;
      const Var out = tape::forward(t.constant(as_rgb(s.image).to_tensor()), vars, cfg, &trace);
      for (const auto& e : trace.entries) {
        ++entries;
        for (double v : e.pathways.value().data) min_pathway = std::min(min_pathway, v);
      }
      for (double v : out.value().data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    run.traces_ok = min_pathway >= 0.0 && lo > 0.0 && hi < 1.0;
    run.trace_detail = std::to_string(entries) + " traced sub-steps, min pathway value " + fmt(min_pathway) +
                       ", outputs in [" + fmt(lo) + ", " + fmt(hi) + "]";
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

Outcome training() {
  const TrainingRun& run = training_run();
  if (!run.error.empty()) return {false, "training aborted: " + run.error};
  const auto& r = run.result;
  const bool ok = r.epochs_completed <= 200 && r.final_loss < r.initial_loss && run.heldout_iou >= kIouBound;
  return {ok, std::to_string(r.epochs_completed) + " epochs, loss " + fmt(r.initial_loss) + " -> " +
                  fmt(r.final_loss) + ", held-out IoU " + fmt(run.heldout_iou) + " (bound " + fmt(kIouBound) + ")"};
}

Outcome invariants() {
  const TrainingRun& run = training_run();
  if (!run.error.empty()) return {false, "training aborted: " + run.error};

  // Overflowing controls must abort with the offending sub-step named.
  SolverConfig cfg;
  cfg.dt = 0.5;
  ControlVariables theta = ControlVariables::zeros(cfg);
  for (double& v : theta.steps[0].left_kernels[1][0].data) v = 1e308;
  bool aborted = false;
  std::string msg;
  try {
    forward(Field(GridSpec{1, 8, 8, 1.0}, 3, 0.9), theta, cfg);
  } catch (const InvariantViolation& e) {
    aborted = true;
    msg = e.what();
  }
  const bool named = msg.find("left j=2") != std::string::npos;
  return {run.traces_ok && aborted && named,
          run.trace_detail + "; training ran clean; overflow " +
              (aborted ? "aborted with \"" + msg + "\"" : std::string("did not abort"))};
}

}  // namespace

int main() {
  std::cout << "splitnet acceptance" << std::endl;
  report(1, "building-block equivalence", 30, building_block);
  report(2, "architecture recovery", 1, architecture);
  report(3, "first-order convergence", 60, convergence);
  report(4, "gradient correctness", 120, gradients);
  report(5, "sampling identities", 0, sampling);
  report(6, "fixed-point facts", 0, fixed_point);
  report(7, "training at desk scale", 1800, training);
  report(8, "positivity and range invariants", 0, invariants);
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
