#include "splitnet/model.hpp"

#include "splitnet/error.hpp"

namespace splitnet {

Field as_rgb(const Field& f) {
  if (f.channels == 3) return f;
  if (f.channels != 1)
    throw ValidationError("input image has " + std::to_string(f.channels) + " channels; expected 1 or 3");
  Field out(f.grid, 3);
  for (int c = 0; c < 3; ++c) std::copy(f.values.begin(), f.values.end(), out.channel(c).begin());
  return out;
}

Field initial_condition(const Field& f, const Tensor& a0) {
  if (a0.rank() != 4 || a0.dim(0) != 1 || a0.dim(1) != 3)
    throw ValidationError("initial kernels must be (1, 3, k, k), got " + a0.shape_string());
  const Field rgb = as_rgb(f);
  ad::Tape t;
  const ad::Var u0 = ad::sigmoid(ad::conv2d_same(t.constant(rgb.to_tensor()), t.constant(a0)));
  return Field::from_tensor(f.grid, u0.value());
}

Field forward(const Field& f, const ControlVariables& theta, const SolverConfig& cfg) {
  theta.validate(cfg);
  if (f.grid.level != 1) throw ValidationError("forward needs a level-1 image");
  make_pyramid(cfg, f.grid.rows, f.grid.cols);
  ad::Tape t;
  const tape::ModelVars vars = tape::bind(t, theta, false);
  const ad::Var out = tape::forward(t.constant(as_rgb(f).to_tensor()), vars, cfg);
  return Field::from_tensor(f.grid, out.value());
}

namespace tape {

ModelVars bind(ad::Tape& t, const ControlVariables& theta, bool trainable) {
  ModelVars v;
  v.initial_kernel = trainable ? t.parameter(theta.initial_kernel) : t.constant(theta.initial_kernel);
  for (const auto& s : theta.steps) v.steps.push_back(bind(t, s, trainable));
  return v;
}

ad::Var forward(ad::Var f, const ModelVars& vars, const SolverConfig& cfg, Trace* trace, int steps) {
  const int n_steps = steps > 0 ? steps : cfg.steps;
  if (n_steps > static_cast<int>(vars.steps.size()))
    throw ValidationError("requested " + std::to_string(n_steps) + " time steps but only " +
                          std::to_string(vars.steps.size()) + " parameter sets exist");
  const Tensor& fv = f.value();
  if (fv.rank() != 3 || fv.dim(0) != 3) throw ValidationError("forward needs a (3, rows, cols) image");
  ad::Var u = ad::sigmoid(ad::conv2d_same(f, vars.initial_kernel));
  for (int n = 0; n < n_steps; ++n) u = vcycle_step(u, vars.steps[static_cast<std::size_t>(n)], cfg, trace);
  return u;
}

void for_each_var(const ModelVars& vars, const std::function<void(const ad::Var&)>& fn) {
  fn(vars.initial_kernel);
  for (const auto& s : vars.steps) {
    for (std::size_t j = 0; j < s.left_kernels.size(); ++j)
      for (std::size_t l = 0; l < s.left_kernels[j].size(); ++l) {
        fn(s.left_kernels[j][l]);
        fn(s.left_bias[j][l]);
      }
    for (std::size_t j = 0; j < s.right_kernels.size(); ++j)
      for (std::size_t l = 0; l < s.right_kernels[j].size(); ++l) {
        fn(s.right_kernels[j][l]);
        fn(s.right_bias[j][l]);
      }
    fn(s.final_kernel);
    fn(s.final_bias);
    for (const auto& u : s.up_kernels) fn(u);
  }
}

}  // namespace tape

namespace {

void check_block(const Tensor& kernels, const Tensor& bias, double gamma_dt) {
  if (!(gamma_dt != 0.0)) throw ValidationError("gamma * dt is zero; the weight map is undefined");
  if (kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3) || kernels.dim(2) % 2 == 0)
    throw ValidationError("kernel bank must be (out, in, k, k) with odd k, got " + kernels.shape_string());
  if (bias.rank() != 1 || bias.dim(0) != kernels.dim(0))
    throw ValidationError("bias " + bias.shape_string() + " does not match kernel bank " + kernels.shape_string());
}

std::size_t centre_offset(const Tensor& k) {
  const int ks = k.dim(2);
  return static_cast<std::size_t>(ks / 2) * ks + ks / 2;
}

}  // namespace

std::pair<Tensor, Tensor> map_block(const Tensor& kernels, const Tensor& bias, double gamma_dt) {
  check_block(kernels, bias, gamma_dt);
  Tensor w(kernels.shape);
  const double inv_c = 1.0 / kernels.dim(1);
  const std::size_t plane = static_cast<std::size_t>(kernels.dim(2)) * kernels.dim(3);
  const std::size_t centre = centre_offset(kernels);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double delta = (i % plane == centre) ? inv_c : 0.0;
    w.data[i] = delta + gamma_dt * kernels.data[i];
  }
  Tensor b(bias.shape);
  for (std::size_t i = 0; i < b.size(); ++i) b.data[i] = gamma_dt * bias.data[i];
  return {std::move(w), std::move(b)};
}

std::pair<Tensor, Tensor> unmap_block(const Tensor& weights, const Tensor& bias, double gamma_dt) {
  check_block(weights, bias, gamma_dt);
  Tensor a(weights.shape);
  const double inv_c = 1.0 / weights.dim(1);
  const std::size_t plane = static_cast<std::size_t>(weights.dim(2)) * weights.dim(3);
  const std::size_t centre = centre_offset(weights);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double delta = (i % plane == centre) ? inv_c : 0.0;
    a.data[i] = (weights.data[i] - delta) / gamma_dt;
  }
  Tensor b(bias.shape);
  for (std::size_t i = 0; i < b.size(); ++i) b.data[i] = bias.data[i] / gamma_dt;
  return {std::move(a), std::move(b)};
}

namespace {

template <class Fn>
ControlVariables transform(const ControlVariables& src, const SolverConfig& cfg, Fn&& fn) {
  src.validate(cfg);
  ControlVariables out = src;
  for (std::size_t n = 0; n < out.steps.size(); ++n) {
    StepControls& s = out.steps[n];
    for (int j = 1; j <= cfg.levels; ++j)
      for (int l = 1; l <= cfg.substep_count(j); ++l) {
        auto [w, b] = fn(s.left_kernels[j - 1][l - 1], s.left_bias[j - 1][l - 1], cfg.left_gamma(j) * cfg.dt);
        s.left_kernels[j - 1][l - 1] = std::move(w);
        s.left_bias[j - 1][l - 1] = std::move(b);
      }
    for (int j = 1; j < cfg.levels; ++j)
      for (int l = 1; l <= cfg.substep_count(j); ++l) {
        auto [w, b] = fn(s.right_kernels[j - 1][l - 1], s.right_bias[j - 1][l - 1], cfg.right_gamma(j, l) * cfg.dt);
        s.right_kernels[j - 1][l - 1] = std::move(w);
        s.right_bias[j - 1][l - 1] = std::move(b);
      }
    auto [w, b] = fn(s.final_kernel, s.final_bias, cfg.dt);
    s.final_kernel = std::move(w);
    s.final_bias = std::move(b);
  }
  return out;
}

}  // namespace

ControlVariables map_to_network_weights(const ControlVariables& theta, const SolverConfig& cfg) {
  return transform(theta, cfg, map_block);
}

ControlVariables map_from_network_weights(const ControlVariables& weights, const SolverConfig& cfg) {
  return transform(weights, cfg, unmap_block);
}

}  // namespace splitnet
