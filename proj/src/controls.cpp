#include "splitnet/controls.hpp"

#include <cmath>
#include <random>

#include "splitnet/error.hpp"

namespace splitnet {

namespace {

std::string idx(int j, int l) { return "[" + std::to_string(j) + "][" + std::to_string(l) + "]"; }

struct ExpectedShapes {
  std::vector<int> initial;
  std::vector<std::vector<std::vector<int>>> left_k, right_k;
  std::vector<std::vector<int>> left_b, right_b;  // bias lengths per (j, l) are all c_j
  std::vector<int> final_k;
};

template <class Theta, class Fn>
void visit(Theta& theta, const SolverConfig& cfg, Fn&& fn) {
  fn(TensorInfo{"A0", 1.0}, theta.initial_kernel);
  for (std::size_t n = 0; n < theta.steps.size(); ++n) {
    auto& step = theta.steps[n];
    const std::string pre = "n" + std::to_string(n + 1) + "/";
    for (int j = 1; j <= cfg.levels; ++j) {
      for (int l = 1; l <= cfg.substep_count(j); ++l) {
        const double gdt = cfg.left_gamma(j) * cfg.dt;
        fn(TensorInfo{pre + "A" + idx(j, l), gdt}, step.left_kernels[j - 1][l - 1]);
        fn(TensorInfo{pre + "b" + idx(j, l), gdt}, step.left_bias[j - 1][l - 1]);
      }
    }
    for (int j = 1; j < cfg.levels; ++j) {
      for (int l = 1; l <= cfg.substep_count(j); ++l) {
        const double gdt = cfg.right_gamma(j, l) * cfg.dt;
        fn(TensorInfo{pre + "At" + idx(j, l), gdt}, step.right_kernels[j - 1][l - 1]);
        fn(TensorInfo{pre + "bt" + idx(j, l), gdt}, step.right_bias[j - 1][l - 1]);
      }
    }
    fn(TensorInfo{pre + "Astar", cfg.dt}, step.final_kernel);
    fn(TensorInfo{pre + "bstar", cfg.dt}, step.final_bias);
    for (std::size_t j = 0; j < step.up_kernels.size(); ++j)
      fn(TensorInfo{pre + "U[" + std::to_string(j + 1) + "]", 1.0}, step.up_kernels[j]);
  }
}

void check(const Tensor& t, const std::vector<int>& want, const std::string& name) {
  if (t.shape != want)
    throw ValidationError("control tensor " + name + " has shape " + t.shape_string() + ", config needs " +
                          Tensor(want).shape_string());
  for (double v : t.data)
    if (!std::isfinite(v)) throw ValidationError("control tensor " + name + " has non-finite entries");
}

}  // namespace

ControlVariables ControlVariables::zeros(const SolverConfig& cfg) {
  cfg.validate();
  ControlVariables theta;
  const int k1 = cfg.kernel_size(1);
  theta.initial_kernel = Tensor({1, 3, k1, k1});
  theta.steps.resize(static_cast<std::size_t>(cfg.steps));
  for (auto& step : theta.steps) {
    step.left_kernels.resize(static_cast<std::size_t>(cfg.levels));
    step.left_bias.resize(static_cast<std::size_t>(cfg.levels));
    for (int j = 1; j <= cfg.levels; ++j) {
      const int k = cfg.kernel_size(j);
      for (int l = 1; l <= cfg.substep_count(j); ++l) {
        step.left_kernels[j - 1].emplace_back(std::vector<int>{cfg.width(j), cfg.left_inputs(j, l), k, k});
        step.left_bias[j - 1].emplace_back(std::vector<int>{cfg.width(j)});
      }
    }
    step.right_kernels.resize(static_cast<std::size_t>(cfg.levels - 1));
    step.right_bias.resize(static_cast<std::size_t>(cfg.levels - 1));
    for (int j = 1; j < cfg.levels; ++j) {
      const int k = cfg.kernel_size(j);
      for (int l = 1; l <= cfg.substep_count(j); ++l) {
        step.right_kernels[j - 1].emplace_back(std::vector<int>{cfg.width(j), cfg.right_inputs(j, l), k, k});
        step.right_bias[j - 1].emplace_back(std::vector<int>{cfg.width(j)});
      }
    }
    step.final_kernel = Tensor({1, cfg.width(1), k1, k1});
    step.final_bias = Tensor({1});
    if (cfg.up == UpMode::transpose_conv)
      for (int j = 1; j < cfg.levels; ++j) step.up_kernels.emplace_back(std::vector<int>{1, 2, 2}, 1.0);
  }
  return theta;
}

ControlVariables ControlVariables::random(const SolverConfig& cfg, std::uint64_t seed) {
  ControlVariables theta = zeros(cfg);
  std::mt19937_64 rng(seed);
  for_each_tensor(theta, cfg, [&](const TensorInfo& info, Tensor& t) {
    if (t.rank() != 4) return;  // biases stay 0, upsamplers stay 1
    const double a = 1.0 / (t.dim(2) * std::sqrt(static_cast<double>(t.dim(1))));
    std::uniform_real_distribution<double> dist(-a / info.gamma_dt, a / info.gamma_dt);
    for (double& v : t.data) v = dist(rng);
  });
  return theta;
}

void ControlVariables::validate(const SolverConfig& cfg) const {
  cfg.validate();
  if (steps.size() != static_cast<std::size_t>(cfg.steps))
    throw ValidationError("control variables hold " + std::to_string(steps.size()) + " time steps, config needs " +
                          std::to_string(cfg.steps));
  const ControlVariables ref = zeros(cfg);
  for (std::size_t n = 0; n < steps.size(); ++n) {
    const auto& a = steps[n];
    const auto& b = ref.steps[n];
    if (a.left_kernels.size() != b.left_kernels.size() || a.right_kernels.size() != b.right_kernels.size() ||
        a.left_bias.size() != b.left_bias.size() || a.right_bias.size() != b.right_bias.size() ||
        a.up_kernels.size() != b.up_kernels.size())
      throw ValidationError("control variables have the wrong number of levels for the config");
    for (std::size_t j = 0; j < a.left_kernels.size(); ++j)
      if (a.left_kernels[j].size() != b.left_kernels[j].size() || a.left_bias[j].size() != b.left_bias[j].size())
        throw ValidationError("control variables have the wrong number of left sub-steps at level " +
                              std::to_string(j + 1));
    for (std::size_t j = 0; j < a.right_kernels.size(); ++j)
      if (a.right_kernels[j].size() != b.right_kernels[j].size() || a.right_bias[j].size() != b.right_bias[j].size())
        throw ValidationError("control variables have the wrong number of right sub-steps at level " +
                              std::to_string(j + 1));
  }
  std::vector<std::vector<int>> want;
  for_each_tensor(ref, cfg, [&](const TensorInfo&, const Tensor& t) { want.push_back(t.shape); });
  std::size_t i = 0;
  for_each_tensor(*this, cfg, [&](const TensorInfo& info, const Tensor& t) { check(t, want[i++], info.name); });
}

std::size_t ControlVariables::parameter_count() const {
  std::size_t n = initial_kernel.size();
  for (const auto& s : steps) {
    for (const auto& lv : s.left_kernels) for (const auto& t : lv) n += t.size();
    for (const auto& lv : s.left_bias) for (const auto& t : lv) n += t.size();
    for (const auto& lv : s.right_kernels) for (const auto& t : lv) n += t.size();
    for (const auto& lv : s.right_bias) for (const auto& t : lv) n += t.size();
    n += s.final_kernel.size() + s.final_bias.size();
    for (const auto& t : s.up_kernels) n += t.size();
  }
  return n;
}

void for_each_tensor(ControlVariables& theta, const SolverConfig& cfg,
                     const std::function<void(const TensorInfo&, Tensor&)>& fn) {
  visit(theta, cfg, fn);
}

void for_each_tensor(const ControlVariables& theta, const SolverConfig& cfg,
                     const std::function<void(const TensorInfo&, const Tensor&)>& fn) {
  visit(theta, cfg, fn);
}

}  // namespace splitnet
