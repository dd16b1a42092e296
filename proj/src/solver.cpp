#include "splitnet/solver.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "splitnet/error.hpp"

namespace splitnet {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu_projection: return "relu_projection";
    case Activation::sigmoid_implicit: return "sigmoid_implicit";
    case Activation::none: return "none";
  }
  return "unknown";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu_projection") return Activation::relu_projection;
  if (s == "sigmoid_implicit") return Activation::sigmoid_implicit;
  if (s == "none") return Activation::none;
  throw ValidationError("unknown activation '" + s + "'");
}

void SubstepSpec::validate() const {
  const Tensor& k = kernels.get();
  const Tensor& b = bias.get();
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ValidationError("sub-step gamma must be positive");
  if (k.rank() != 4 || k.dim(2) != k.dim(3) || k.dim(2) % 2 == 0)
    throw ValidationError("sub-step kernels must be (out, in, k, k) with odd k, got " + k.shape_string());
  if (k.dim(1) != inputs)
    throw ValidationError("sub-step kernels read " + std::to_string(k.dim(1)) + " pathways, the sub-step declares " +
                          std::to_string(inputs));
  if (b.rank() != 1 || b.dim(0) != k.dim(0))
    throw ValidationError("sub-step bias " + b.shape_string() + " does not match " + std::to_string(k.dim(0)) +
                          " pathways");
}

namespace {

void require_pathways(const Field& f, int expected, const char* what) {
  if (f.channels != expected)
    throw ValidationError(std::string(what) + " has " + std::to_string(f.channels) + " pathways, expected " +
                          std::to_string(expected));
}

Field field_of(const GridSpec& g, const ad::Var& v) { return Field::from_tensor(g, v.value()); }

double min_of(const Tensor& t) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : t.data) m = std::min(m, v);
  return m;
}

}  // namespace

Field mean_over_pathways(const Field& pathways) {
  ad::Tape t;
  return field_of(pathways.grid, ad::mean_over_pathways(t.constant(pathways.to_tensor())));
}

Field solve_substep(const Field& u_star, const SubstepSpec& spec, double dt) {
  spec.validate();
  if (spec.activation != Activation::relu_projection)
    throw ValidationError("solve_substep handles relu_projection sub-steps only");
  require_pathways(u_star, spec.inputs, "sub-step input");
  ad::Tape t;
  const ad::Var out = tape::substep(t.constant(u_star.to_tensor()), t.constant(spec.kernels.get()),
                                    t.constant(spec.bias.get()), spec.gamma * dt, tape::Site{"substep", u_star.grid.level, 0});
  return field_of(u_star.grid, out);
}

FinalResult solve_final(const Field& u_star, const SubstepSpec& spec, double dt, const FinalPolicy& policy) {
  spec.validate();
  if (spec.activation != Activation::sigmoid_implicit)
    throw ValidationError("solve_final needs a sigmoid_implicit spec");
  if (spec.gamma != 1.0) throw ValidationError("the final step uses gamma = 1");
  if (spec.outputs() != 1) throw ValidationError("the final step has a single output");
  require_pathways(u_star, spec.inputs, "final-step input");
  ad::Tape t;
  const auto res = tape::final_step(t.constant(u_star.to_tensor()), t.constant(spec.kernels.get()),
                                    t.constant(spec.bias.get()), dt, policy);
  return FinalResult{field_of(u_star.grid, res.value), res.converged, res.iterations};
}

Field relaxation(const GridPyramid& pyr, const Field& coarse, const Field& skip, RelaxMode mode,
                 const Tensor* up_kernel) {
  if (coarse.grid.level != skip.grid.level + 1 || pyr.level(skip.grid.level) != skip.grid ||
      pyr.level(coarse.grid.level) != coarse.grid)
    throw ValidationError("relaxation needs a skip field on level j and a coarse field on level j + 1");
  if (mode == RelaxMode::skip_average && skip.channels < 1) throw ValidationError("relaxation needs skip pathways");
  ad::Tape t;
  ad::Var kernel;
  if (pyr.up_mode() == UpMode::transpose_conv) {
    if (!up_kernel) throw ValidationError("transpose-conv upsampling needs a kernel");
    kernel = t.constant(*up_kernel);
  }
  const ad::Var out = tape::relaxation(t.constant(coarse.to_tensor()), t.constant(skip.to_tensor()), mode,
                                       pyr.up_mode(), kernel.valid() ? &kernel : nullptr);
  return field_of(skip.grid, out);
}

GridPyramid make_pyramid(const SolverConfig& cfg, int rows, int cols) {
  return GridPyramid(rows, cols, cfg.levels, 1.0, cfg.down, cfg.up);
}

Field vcycle_step(const Field& u, const StepControls& controls, const SolverConfig& cfg) {
  cfg.validate();
  if (u.channels != 1 || u.grid.level != 1) throw ValidationError("vcycle_step needs a single-channel level-1 field");
  const GridPyramid pyr = make_pyramid(cfg, u.grid.rows, u.grid.cols);
  ad::Tape t;
  const tape::StepVars vars = tape::bind(t, controls, false);
  return field_of(u.grid, tape::vcycle_step(t.constant(u.to_tensor()), vars, cfg));
}

namespace tape {

std::string Site::label() const {
  return branch + " j=" + std::to_string(level) + " l=" + std::to_string(substep);
}

StepVars bind(ad::Tape& t, const StepControls& c, bool trainable) {
  auto make = [&](const Tensor& x) { return trainable ? t.parameter(x) : t.constant(x); };
  auto make2 = [&](const std::vector<std::vector<Tensor>>& src) {
    std::vector<std::vector<ad::Var>> out;
    for (const auto& row : src) {
      auto& r = out.emplace_back();
      for (const auto& x : row) r.push_back(make(x));
    }
    return out;
  };
  StepVars v;
  v.left_kernels = make2(c.left_kernels);
  v.left_bias = make2(c.left_bias);
  v.right_kernels = make2(c.right_kernels);
  v.right_bias = make2(c.right_bias);
  v.final_kernel = make(c.final_kernel);
  v.final_bias = make(c.final_bias);
  for (const auto& x : c.up_kernels) v.up_kernels.push_back(make(x));
  return v;
}

ad::Var substep(ad::Var u_star, ad::Var kernels, ad::Var bias, double gamma_dt, const Site& site) {
  const ad::Var mean = ad::mean_over_pathways(u_star);
  const ad::Var drive = ad::add_bias(ad::conv2d_same(u_star, kernels), bias);
  const ad::Var ubar = ad::axpy(mean, gamma_dt, drive);
  for (double v : ubar.value().data)
    if (!std::isfinite(v)) throw InvariantViolation("non-finite pre-activation at " + site.label());
  const ad::Var out = ad::relu(ubar);
  const double lo = min_of(out.value());
  if (lo < 0.0) {
    std::ostringstream os;
    os << "negative pathway value " << lo << " after the projection at " << site.label();
    throw InvariantViolation(os.str());
  }
  return out;
}

FinalOutcome final_step(ad::Var u_star, ad::Var kernel, ad::Var bias, double dt, const FinalPolicy& policy) {
  const ad::Var mean = ad::mean_over_pathways(u_star);
  const ad::Var drive = ad::add_bias(ad::conv2d_same(u_star, kernel), bias);
  const ad::Var ubar = ad::axpy(mean, dt, drive);
  for (double v : ubar.value().data)
    if (!std::isfinite(v)) throw InvariantViolation("non-finite pre-activation at the final step");
  FinalOutcome out;
  if (policy.mode == FinalMode::two_step) {
    out.value = ad::sigmoid(ad::center_scale(ubar, 0.5, dt));
    out.iterations = 2;
  } else {
    ad::FixedPointStats st;
    out.value = ad::logit_fixed_point(ubar, dt, policy.damping_for(dt), policy.tol, policy.max_iter, &st);
    out.converged = st.converged;
    out.iterations = st.iterations;
  }
  for (double v : out.value.value().data)
    if (!(v > 0.0 && v < 1.0)) {
      std::ostringstream os;
      os << "final output " << v << " outside (0, 1)";
      throw InvariantViolation(os.str());
    }
  return out;
}

ad::Var upsample(ad::Var coarse, UpMode mode, const ad::Var* kernel) {
  if (mode == UpMode::nearest) return ad::upsample_nearest(coarse);
  if (!kernel || !kernel->valid()) throw ValidationError("transpose-conv upsampling needs a kernel");
  return ad::transpose_conv2(coarse, *kernel);
}

ad::Var downsample(ad::Var fine, DownMode mode) {
  return mode == DownMode::average ? ad::avgpool2(fine) : ad::maxpool2(fine);
}

ad::Var relaxation(ad::Var coarse, ad::Var skip, RelaxMode mode, UpMode up, const ad::Var* up_kernel) {
  switch (mode) {
    case RelaxMode::skip_average: {
      const ad::Var up_mean = upsample(ad::mean_over_pathways(coarse), up, up_kernel);
      return ad::lincomb(0.5, skip, 0.5, up_mean);
    }
    case RelaxMode::paper_literal: {
      const ad::Var up_mean = upsample(ad::mean_over_pathways(coarse), up, up_kernel);
      return ad::lincomb(0.5, upsample(coarse, up, up_kernel), 0.5, up_mean);
    }
    case RelaxMode::concat:
      return ad::concat_channels(skip, upsample(coarse, up, up_kernel));
  }
  throw ValidationError("unknown relaxation mode");
}

ad::Var vcycle_step(ad::Var u, const StepVars& vars, const SolverConfig& cfg, Trace* trace, bool* final_converged) {
  const Tensor& uv = u.value();
  if (uv.rank() != 3 || uv.dim(0) != 1) throw ValidationError("vcycle_step needs a (1, rows, cols) input");
  const int J = cfg.levels;
  if (static_cast<int>(vars.left_kernels.size()) != J || static_cast<int>(vars.right_kernels.size()) != J - 1)
    throw ValidationError("control variables do not match the configured number of levels");
  if (cfg.up == UpMode::transpose_conv && static_cast<int>(vars.up_kernels.size()) != J - 1)
    throw ValidationError("transpose-conv upsampling needs one kernel per coarse level");
  {
    // Raises if the image cannot carry J levels.
    make_pyramid(cfg, uv.dim(1), uv.dim(2));
  }
  auto record = [&](const Site& s, const ad::Var& v) {
    if (trace) trace->entries.push_back({s.label(), s.level, v});
  };

  std::vector<ad::Var> skips(static_cast<std::size_t>(J));
  ad::Var v = u;
  for (int j = 1; j <= J; ++j) {
    if (j > 1) v = downsample(v, cfg.down);
    const double gdt = cfg.left_gamma(j) * cfg.dt;
    for (int l = 1; l <= cfg.substep_count(j); ++l) {
      const Site site{"left", j, l};
      v = substep(v, vars.left_kernels[j - 1][l - 1], vars.left_bias[j - 1][l - 1], gdt, site);
      record(site, v);
    }
    skips[static_cast<std::size_t>(j - 1)] = v;
  }

  ad::Var w = v;
  for (int j = J - 1; j >= 1; --j) {
    const ad::Var* kernel = cfg.up == UpMode::transpose_conv ? &vars.up_kernels[j - 1] : nullptr;
    w = relaxation(w, skips[static_cast<std::size_t>(j - 1)], cfg.relax, cfg.up, kernel);
    for (int l = 1; l <= cfg.substep_count(j); ++l) {
      const Site site{"right", j, l};
      w = substep(w, vars.right_kernels[j - 1][l - 1], vars.right_bias[j - 1][l - 1], cfg.right_gamma(j, l) * cfg.dt,
                  site);
      record(site, w);
    }
  }

  const FinalOutcome fin = final_step(w, vars.final_kernel, vars.final_bias, cfg.dt, cfg.final_policy);
  if (final_converged) *final_converged = fin.converged;
  record(Site{"final", 1, 1}, fin.value);
  return fin.value;
}

}  // namespace tape

}  // namespace splitnet
