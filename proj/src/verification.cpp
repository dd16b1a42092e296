#include "splitnet/verification.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "splitnet/config_io.hpp"
#include "splitnet/descriptor.hpp"
#include "splitnet/error.hpp"
#include "splitnet/model.hpp"
#include "splitnet/numerics.hpp"

namespace splitnet {

// Convergence -------------------------------------------------------------------

namespace {

bool is_zero_op(const Eigen::MatrixXd& m) { return m.size() == 0 || m.isZero(0.0); }

void probe_operator(const Eigen::MatrixXd& op, const std::string& what, std::mt19937_64& rng, int probes) {
  if (is_zero_op(op)) return;
  std::normal_distribution<double> nd;
  const auto n = op.rows();
  const double scale = op.cwiseAbs().maxCoeff();
  for (int p = 0; p < probes; ++p) {
    Eigen::VectorXd x(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x[i] = nd(rng);
      y[i] = nd(rng);
    }
    const double lhs = (op * x).dot(y);
    const double rhs = x.dot(op * y);
    if (std::abs(lhs - rhs) > 1e-10 * scale * x.norm() * y.norm())
      throw ValidationError(what + " is not symmetric: <Ax,y> = " + std::to_string(lhs) + ", <x,Ay> = " +
                            std::to_string(rhs));
    if (!((op * x).dot(x) > 0.0)) throw ValidationError(what + " is not positive definite on a probe vector");
  }
}

}  // namespace

void require_spd(const OperatorTable& table, std::uint64_t probe_seed, int probes) {
  table.validate();
  std::mt19937_64 rng(probe_seed);
  for (std::size_t m = 0; m < table.stages.size(); ++m) {
    const auto& st = table.stages[m];
    const std::string pre = "stage " + std::to_string(m + 1);
    for (std::size_t k = 0; k < st.explicit_ops.size(); ++k)
      for (std::size_t s = 0; s < st.explicit_ops[k].size(); ++s)
        probe_operator(st.explicit_ops[k][s], pre + " A[" + std::to_string(k + 1) + "][" + std::to_string(s + 1) + "]",
                       rng, probes);
    for (std::size_t k = 0; k < st.implicit_ops.size(); ++k)
      probe_operator(st.implicit_ops[k], pre + " S[" + std::to_string(k + 1) + "]", rng, probes);
  }
}

std::vector<double> dyadic_steps(double horizon, int first_power, int last_power) {
  std::vector<double> out;
  for (int p = first_power; p <= last_power; ++p) out.push_back(std::ldexp(horizon, -p));
  return out;
}

namespace {

int step_count(double horizon, double dt) {
  const double n = horizon / dt;
  const double r = std::round(n);
  if (r < 1.0 || std::abs(n - r) > 1e-9 * r)
    throw ValidationError("time step " + std::to_string(dt) + " does not divide the horizon " + std::to_string(horizon));
  return static_cast<int>(r);
}

}  // namespace

ConvergenceReport convergence_study(const ConvergenceProblem& problem, const std::vector<double>& dts,
                                    std::uint64_t probe_seed) {
  if (dts.size() < 2) throw ValidationError("a convergence study needs at least two time steps");
  for (std::size_t i = 1; i < dts.size(); ++i)
    if (!(dts[i] < dts[i - 1])) throw ValidationError("time steps must be strictly decreasing");
  if (problem.u0.size() != problem.table.dim) throw ValidationError("initial value does not match the operator table");
  require_spd(problem.table, probe_seed);

  ConvergenceReport rep;
  rep.problem = problem.name;
  rep.dts = dts;

  Eigen::VectorXd reference;
  if (problem.exact) {
    reference = problem.exact(problem.horizon);
  } else {
    rep.reference_dt = dts.back() / 64.0;
    const HybridIntegrator fine(problem.table, rep.reference_dt);
    reference = fine.run(problem.u0, step_count(problem.horizon, rep.reference_dt));
  }

  for (double dt : dts) {
    const HybridIntegrator integ(problem.table, dt);
    const Eigen::VectorXd u = integ.run(problem.u0, step_count(problem.horizon, dt));
    const double err = (u - reference).cwiseAbs().maxCoeff();
    if (!std::isfinite(err)) throw ValidationError("non-finite error at dt = " + std::to_string(dt));
    rep.errors.push_back(err);
  }

  const bool all_zero = std::all_of(rep.errors.begin(), rep.errors.end(), [](double e) { return e == 0.0; });
  if (all_zero) {
    rep.degenerate = true;
    rep.slope = std::numeric_limits<double>::quiet_NaN();
    rep.pass = true;
    return rep;
  }
  if (std::any_of(rep.errors.begin(), rep.errors.end(), [](double e) { return e == 0.0; })) {
    rep.slope = std::numeric_limits<double>::quiet_NaN();
    rep.pass = false;
    return rep;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(dts.size());
  for (std::size_t i = 0; i < dts.size(); ++i) {
    const double x = std::log(dts[i]);
    const double y = std::log(rep.errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  rep.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  rep.pass = rep.slope >= 0.8 && rep.slope <= 1.2;
  return rep;
}

std::string ConvergenceReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "[convergence]\n";
  os << "problem = " << problem << "\n";
  os << "reference = " << (reference_dt > 0 ? "fine-step" : "closed-form") << "\n";
  if (reference_dt > 0) os << "reference_dt = " << reference_dt << "\n";
  for (std::size_t i = 0; i < dts.size(); ++i) os << "error(dt=" << dts[i] << ") = " << errors[i] << "\n";
  if (degenerate) {
    os << "slope = undefined (all errors zero)\n";
  } else {
    os << "slope = " << slope << "\n";
  }
  os << "window = [0.8, 1.2]\n";
  os << "result = " << (pass ? "pass" : "fail") << "\n";
  return os.str();
}

ConvergenceProblem scalar_decay_problem(double horizon) {
  ConvergenceProblem p;
  p.name = "scalar decay u' = -u";
  p.table.dim = 1;
  HybridStage st;
  st.explicit_ops = {{Eigen::MatrixXd::Identity(1, 1)}};
  p.table.stages.push_back(st);
  p.u0 = Eigen::VectorXd::Ones(1);
  p.horizon = horizon;
  p.exact = [](double t) { return Eigen::VectorXd::Constant(1, std::exp(-t)); };
  return p;
}

ConvergenceProblem diagonal_two_stage_problem(int rows, int cols, std::uint64_t seed, double horizon) {
  const int n = rows * cols;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> diag(0.5, 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto spd = [&] {
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = diag(rng);
    return Eigen::MatrixXd(d.asDiagonal());
  };
  ConvergenceProblem p;
  p.name = "two-stage diagonal SPD, c = (1, 2, 1), " + std::to_string(rows) + "x" + std::to_string(cols);
  p.table.dim = n;
  HybridStage s1;
  s1.explicit_ops = {{spd()}, {spd()}};
  s1.implicit_ops = {spd(), spd()};
  HybridStage s2;
  s2.explicit_ops = {{spd(), spd()}};
  s2.implicit_ops = {spd()};
  p.table.stages = {s1, s2};
  p.u0.resize(n);
  for (int i = 0; i < n; ++i) p.u0[i] = unit(rng);
  p.horizon = horizon;
  return p;
}

// Building-block equivalence ---------------------------------------------------

Tensor reference_conv2d(const Tensor& x, const Tensor& bank) {
  const int cin = x.dim(0), rows = x.dim(1), cols = x.dim(2);
  const int cout = bank.dim(0), k = bank.dim(2), h = k / 2;
  if (bank.dim(1) != cin) throw ValidationError("reference_conv2d: channel mismatch");
  Tensor out({cout, rows, cols});
  for (int o = 0; o < cout; ++o)
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        double s = 0.0;
        for (int i = 0; i < cin; ++i)
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const int rr = r + dy - h, cc = c + dx - h;
              if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
              s += bank.data[((static_cast<std::size_t>(o) * cin + i) * k + dy) * k + dx] *
                   x.data[(static_cast<std::size_t>(i) * rows + rr) * cols + cc];
            }
        out.data[(static_cast<std::size_t>(o) * rows + r) * cols + c] = s;
      }
  return out;
}

namespace {

Tensor add_bias_ref(Tensor t, const Tensor& b) {
  const std::size_t plane = t.size() / static_cast<std::size_t>(t.dim(0));
  for (int c = 0; c < t.dim(0); ++c)
    for (std::size_t p = 0; p < plane; ++p) t.data[c * plane + p] += b.data[static_cast<std::size_t>(c)];
  return t;
}

Tensor relu_ref(Tensor t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
  return t;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor random_tensor(std::vector<int> shape, double lo, double hi, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.data) v = d(rng);
  return t;
}

double max_abs_diff(const Tensor& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b[i]));
  return m;
}

std::string describe(const SubstepSpec& spec, double dt, int rows, int cols) {
  std::ostringstream os;
  os << "pathways " << spec.outputs() << ", inputs " << spec.inputs << ", kernel " << spec.kernels.get().dim(2)
     << ", grid " << rows << "x" << cols << ", gamma " << spec.gamma << ", dt " << dt;
  return os.str();
}

}  // namespace

EquivalenceReport block_equivalence_check(const SubstepSpec& spec, double dt, int trials, std::uint64_t seed,
                                          double perturbation) {
  spec.validate();
  if (trials < 1) throw ValidationError("block equivalence needs at least one trial");
  auto [w, b] = map_block(spec.kernels.get(), spec.bias.get(), spec.gamma * dt);
  for (double& v : w.data) v += perturbation;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pow2(1, 4);
  EquivalenceReport rep;
  for (int t = 0; t < trials; ++t) {
    const int rows = 1 << pow2(rng), cols = 1 << pow2(rng);
    const Tensor u = random_tensor({spec.inputs, rows, cols}, 0.0, 1.0, rng);
    const GridSpec g{1, rows, cols, 1.0};
    const Field got = solve_substep(Field::from_tensor(g, u), spec, dt);
    const Tensor want = relu_ref(add_bias_ref(reference_conv2d(u, w), b));
    const double dev = max_abs_diff(want, got.values);
    ++rep.trials;
    if (dev >= rep.max_deviation) {
      rep.max_deviation = dev;
      rep.worst = describe(spec, dt, rows, cols);
    }
  }
  return rep;
}

EquivalenceReport final_equivalence_check(const SubstepSpec& spec, double dt, int trials, std::uint64_t seed) {
  spec.validate();
  if (trials < 1) throw ValidationError("block equivalence needs at least one trial");
  const auto [w, b] = map_block(spec.kernels.get(), spec.bias.get(), dt);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pow2(1, 4);
  EquivalenceReport rep;
  for (int t = 0; t < trials; ++t) {
    const int rows = 1 << pow2(rng), cols = 1 << pow2(rng);
    const Tensor u = random_tensor({spec.inputs, rows, cols}, 0.0, 1.0, rng);
    const GridSpec g{1, rows, cols, 1.0};
    FinalPolicy policy;
    const FinalResult got = solve_final(Field::from_tensor(g, u), spec, dt, policy);
    Tensor want = add_bias_ref(reference_conv2d(u, w), b);
    for (double& v : want.data) v = logistic((v - 0.5) / dt);
    const double dev = max_abs_diff(want, got.value.values);
    ++rep.trials;
    if (dev >= rep.max_deviation) {
      rep.max_deviation = dev;
      rep.worst = "head: " + describe(spec, dt, rows, cols);
    }
  }
  return rep;
}

EquivalenceReport equivalence_sweep(int specs, std::uint64_t seed, int max_size, int max_pathways) {
  if (specs < 1) throw ValidationError("the sweep needs at least one spec");
  if (max_size < 2 || !is_power_of_two(max_size)) throw ValidationError("max grid size must be a power of two >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> paths(1, max_pathways);
  std::uniform_int_distribution<int> ksel(0, 2);
  std::uniform_int_distribution<int> level(1, 5);
  std::uniform_real_distribution<double> dtd(0.05, 1.0);
  EquivalenceReport rep;
  for (int i = 0; i < specs; ++i) {
    const bool head = i % 5 == 4;
    const int inputs = paths(rng);
    const int outputs = head ? 1 : paths(rng);
    const int k = 1 + 2 * ksel(rng);
    const double dt = dtd(rng);
    const double gamma = head ? 1.0 : std::ldexp(static_cast<double>(head ? 1 : inputs), level(rng) - 1);
    const double a = 1.0 / (k * std::sqrt(static_cast<double>(inputs))) / (gamma * dt);
    const Tensor kernels = random_tensor({outputs, inputs, k, k}, -a, a, rng);
    const Tensor bias = random_tensor({outputs}, -0.2 / (gamma * dt), 0.2 / (gamma * dt), rng);
    const SubstepSpec spec{gamma, std::cref(kernels), std::cref(bias),
                           head ? Activation::sigmoid_implicit : Activation::relu_projection, inputs};
    const std::uint64_t trial_seed = rng();
    EquivalenceReport one = head ? final_equivalence_check(spec, dt, 1, trial_seed)
                                 : block_equivalence_check(spec, dt, 1, trial_seed);
    (void)max_size;
    rep.trials += one.trials;
    if (one.max_deviation >= rep.max_deviation) {
      rep.max_deviation = one.max_deviation;
      rep.worst = one.worst;
    }
  }
  return rep;
}

std::string EquivalenceReport::to_text() const {
  std::ostringstream os;
  os << "[equivalence]\n";
  os << "trials = " << trials << "\n";
  os << std::setprecision(3) << "max_deviation = " << max_deviation << "\n";
  os << "tolerance = " << tolerance << "\n";
  os << "worst = " << worst << "\n";
  os << "result = " << (pass() ? "pass" : "fail") << "\n";
  return os.str();
}

// Plain network oracle -----------------------------------------------------------

namespace {

Tensor pool_ref(const Tensor& x, DownMode mode) {
  const int c = x.dim(0), r = x.dim(1) / 2, q = x.dim(2) / 2;
  Tensor out({c, r, q});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < q; ++j) {
        auto at = [&](int a, int b) { return x.data[(static_cast<std::size_t>(ch) * x.dim(1) + a) * x.dim(2) + b]; };
        const double v00 = at(2 * i, 2 * j), v01 = at(2 * i, 2 * j + 1), v10 = at(2 * i + 1, 2 * j),
                     v11 = at(2 * i + 1, 2 * j + 1);
        out.data[(static_cast<std::size_t>(ch) * r + i) * q + j] =
            mode == DownMode::max ? std::max(std::max(v00, v01), std::max(v10, v11)) : (v00 + v01 + v10 + v11) / 4.0;
      }
  return out;
}

Tensor up_ref(const Tensor& x, UpMode mode, const Tensor* kernel) {
  const int c = x.dim(0), r = x.dim(1), q = x.dim(2);
  Tensor out({c, 2 * r, 2 * q});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < 2 * r; ++i)
      for (int j = 0; j < 2 * q; ++j) {
        const double v = x.data[(static_cast<std::size_t>(ch) * r + i / 2) * q + j / 2];
        const double w = mode == UpMode::nearest ? 1.0 : kernel->data[static_cast<std::size_t>((i % 2) * 2 + j % 2)];
        out.data[(static_cast<std::size_t>(ch) * 2 * r + i) * 2 * q + j] = v * w;
      }
  return out;
}

Tensor channel_mean_ref(const Tensor& x) {
  const int c = x.dim(0);
  const std::size_t plane = x.size() / static_cast<std::size_t>(c);
  Tensor out({1, x.dim(1), x.dim(2)});
  for (std::size_t p = 0; p < plane; ++p) {
    double s = 0.0;
    for (int ch = 0; ch < c; ++ch) s += x.data[ch * plane + p];
    out.data[p] = s / c;
  }
  return out;
}

Tensor layer(const Tensor& x, const Tensor& w, const Tensor& b) { return relu_ref(add_bias_ref(reference_conv2d(x, w), b)); }

}  // namespace

Field unet_reference_forward(const Field& image, const ControlVariables& weights, const SolverConfig& cfg) {
  weights.validate(cfg);
  const Field rgb = as_rgb(image);
  Tensor x = reference_conv2d(rgb.to_tensor(), weights.initial_kernel);
  for (double& v : x.data) v = logistic(v);
  const int J = cfg.levels;
  for (const StepControls& s : weights.steps) {
    std::vector<Tensor> skips(static_cast<std::size_t>(J));
    for (int j = 1; j <= J; ++j) {
      if (j > 1) x = pool_ref(x, cfg.down);
      for (int l = 1; l <= cfg.substep_count(j); ++l) x = layer(x, s.left_kernels[j - 1][l - 1], s.left_bias[j - 1][l - 1]);
      skips[static_cast<std::size_t>(j - 1)] = x;
    }
    for (int j = J - 1; j >= 1; --j) {
      const Tensor* k = cfg.up == UpMode::transpose_conv ? &s.up_kernels[static_cast<std::size_t>(j - 1)] : nullptr;
      const Tensor& skip = skips[static_cast<std::size_t>(j - 1)];
      const Tensor up_mean = up_ref(channel_mean_ref(x), cfg.up, k);
      Tensor merged;
      if (cfg.relax == RelaxMode::concat) {
        const Tensor up = up_ref(x, cfg.up, k);
        merged = Tensor({skip.dim(0) + up.dim(0), skip.dim(1), skip.dim(2)});
        std::copy(skip.data.begin(), skip.data.end(), merged.data.begin());
        std::copy(up.data.begin(), up.data.end(), merged.data.begin() + static_cast<std::ptrdiff_t>(skip.size()));
      } else {
        const Tensor base = cfg.relax == RelaxMode::skip_average ? skip : up_ref(x, cfg.up, k);
        merged = Tensor(base.shape);
        const std::size_t plane = up_mean.size();
        for (std::size_t i = 0; i < base.size(); ++i) merged.data[i] = 0.5 * base.data[i] + 0.5 * up_mean.data[i % plane];
      }
      x = merged;
      for (int l = 1; l <= cfg.substep_count(j); ++l)
        x = layer(x, s.right_kernels[j - 1][l - 1], s.right_bias[j - 1][l - 1]);
    }
    Tensor head = add_bias_ref(reference_conv2d(x, s.final_kernel), s.final_bias);
    for (double& v : head.data)
      v = cfg.final_policy.mode == FinalMode::two_step ? logistic((v - 0.5) / cfg.dt) : fixed_point_oracle(v, cfg.dt);
    x = head;
  }
  return Field::from_tensor(image.grid, x);
}

// Architecture audit -----------------------------------------------------------------

bool AuditReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const AuditCheck& c) { return c.pass; });
}

const AuditCheck* AuditReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

std::string AuditReport::to_text() const {
  std::ostringstream os;
  os << "[architecture]\n";
  for (const auto& c : checks) os << c.name << " = " << (c.pass ? "pass" : "fail") << " (" << c.detail << ")\n";
  os << "result = " << (pass() ? "pass" : "fail") << "\n";
  return os.str();
}

AuditReport architecture_audit(const SolverConfig& cfg) {
  AuditReport rep;
  auto add = [&](std::string name, bool ok, std::string detail) { rep.checks.push_back({std::move(name), ok, std::move(detail)}); };
  const auto problems = cfg.problems();
  if (!problems.empty()) {
    add("valid configuration", false, problems.front());
    return rep;
  }
  const ArchitectureDescriptor d = ArchitectureDescriptor::parse(ArchitectureDescriptor::build(cfg).to_text());

  add("grid levels", d.levels == 5, std::to_string(d.levels) + " levels, expected 5");

  auto count = [&](const std::string& branch, int j) {
    return static_cast<int>(std::count_if(d.layers.begin(), d.layers.end(), [&](const LayerDescriptor& L) {
      return L.branch == branch && L.level == j;
    }));
  };
  for (int j = 1; j <= d.levels; ++j) {
    const int enc = count("left", j);
    add("sequential splitting count (level " + std::to_string(j) + ")", enc == 2,
        std::to_string(enc) + " encoder convolutions, expected 2");
  }
  for (int j = 1; j < d.levels; ++j) {
    const int dec = count("right", j);
    add("decoder convolutions (level " + std::to_string(j) + ")", dec == 2,
        std::to_string(dec) + " decoder convolutions, expected 2");
  }

  {
    bool ok = !d.widths.empty() && d.widths[0] > 0;
    const double scale = ok ? d.widths[0] / 64.0 : 0.0;
    std::ostringstream want;
    for (std::size_t j = 0; j < d.widths.size(); ++j) {
      const double expected = 64.0 * std::ldexp(1.0, static_cast<int>(j)) * scale;
      want << (j ? "," : "") << expected;
      ok = ok && d.widths[j] == expected;
    }
    add("widths", ok, "got " + join_ints(d.widths) + ", expected " + want.str() + " (scale " + format_double(scale) + ")");
  }

  bool kernels_ok = true;
  bool relu_ok = true;
  for (const auto& L : d.layers) {
    kernels_ok = kernels_ok && L.kernel == 3;
    if (L.branch != "final") relu_ok = relu_ok && L.activation == Activation::relu_projection;
  }
  add("kernel size", kernels_ok, "3x3 convolutions throughout");
  add("relu layers", relu_ok, "every encoder and decoder layer is conv + ReLU");
  add("downsampling", d.down == "max", "down = " + d.down + ", expected max");
  add("upsampling", d.up == "transpose_conv", "up = " + d.up + ", expected transpose_conv");

  int skips = 0;
  for (int j = 1; j < d.levels; ++j)
    for (const auto& L : d.layers)
      if (L.branch == "right" && L.level == j && L.substep == 1 && L.skip != "none") ++skips;
  add("skip connections", skips == d.levels - 1 && d.levels > 1,
      std::to_string(skips) + " skips, expected one per level below the bottom");

  const LayerDescriptor& head = d.layers.back();
  const bool head_ok = head.branch == "final" && head.activation == Activation::sigmoid_implicit && head.pathways == 1 &&
                       !d.widths.empty() && head.inputs == d.widths[0];
  add("sigmoid head", head_ok, "final layer " + to_string(head.activation) + " with " + std::to_string(head.pathways) + " output");
  add("time steps", d.time_steps == 1, "N = " + std::to_string(d.time_steps) + ", expected 1");
  return rep;
}

// Fixed point ---------------------------------------------------------------------------

double fixed_point_oracle(double ubar, double dt) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    // g(p) = p - Sig((ubar - p)/dt) is increasing in p.
    if (mid - logistic((ubar - mid) / dt) > 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

FixedPointReport fixedpoint_diagnostics(const std::vector<double>& ubars, const std::vector<double>& dts, double damping,
                                        double tol, int max_iter) {
  FixedPointReport rep;
  for (double dt : dts) {
    if (!(dt > 0.0)) throw ValidationError("time steps must be positive");
    for (double ub : ubars) {
      FixedPointProbe p;
      p.ubar = ub;
      p.dt = dt;
      p.damping = damping > 0.0 ? damping : std::min(1.0, 2.0 * dt);
      ad::Tape t;
      const ad::Var u = t.constant(Tensor({1, 1, 1}, ub));
      p.first_iterate = ad::logit_fixed_point(u, dt, 1.0, 0.0, 1).value().data[0];
      ad::FixedPointStats st;
      p.value = ad::logit_fixed_point(u, dt, p.damping, tol, max_iter, &st).value().data[0];
      p.converged = st.converged;
      p.iterations = st.iterations;
      p.oracle = fixed_point_oracle(ub, dt);
      p.oracle_error = std::abs(p.value - p.oracle);
      p.residual = std::abs((p.value - ub) / dt + std::log(p.value / (1.0 - p.value)));
      rep.first_iterate_half = rep.first_iterate_half && p.first_iterate == 0.5;
      rep.probes.push_back(p);
    }
  }
  return rep;
}

std::string FixedPointReport::to_text() const {
  std::ostringstream os;
  os << "[fixedpoint]\n";
  os << "first_iterate_half = " << (first_iterate_half ? "yes" : "no") << "\n";
  os << std::setprecision(6);
  for (const auto& p : probes) {
    os << "probe(ubar=" << p.ubar << ", dt=" << p.dt << ", damping=" << p.damping << ") = "
       << (p.converged ? "converged" : "not converged") << " after " << p.iterations << " iterations, p = "
       << std::setprecision(12) << p.value << ", |p - oracle| = " << std::setprecision(3) << p.oracle_error
       << ", residual = " << p.residual << std::setprecision(6) << "\n";
  }
  return os.str();
}

}  // namespace splitnet
