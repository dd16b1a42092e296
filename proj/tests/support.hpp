#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "splitnet/autodiff.hpp"
#include "splitnet/controls.hpp"
#include "splitnet/model.hpp"
#include "splitnet/field.hpp"
#include "splitnet/tensor.hpp"

namespace testing {

using splitnet::Field;
using splitnet::GridSpec;
using splitnet::Tensor;

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.data) v = d(rng);
  return t;
}

inline Field random_field(int channels, int rows, int cols, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0,
                          int level = 1) {
  Field f(GridSpec{level, rows, cols, std::ldexp(1.0, level - 1)}, channels);
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : f.values) v = d(rng);
  return f;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  return true;
}

/// Scalar loss built from parameter nodes holding the given values.
using LossBuilder = std::function<splitnet::ad::Var(splitnet::ad::Tape&, const std::vector<splitnet::ad::Var>&)>;

struct GradCheck {
  double worst = 0.0;    // largest per-tensor relative error
  std::size_t tensor = 0;
  std::size_t checked = 0;
};

/// Central differences against backward(). The error of a tensor is
/// ||g_ad - g_fd|| / max(||g_ad||, ||g_fd||, floor).
inline GradCheck gradient_check(std::vector<Tensor> params, const LossBuilder& build, double eps = 1e-6,
                                double floor = 1e-8) {
  using namespace splitnet::ad;
  std::vector<Tensor> analytic;
  {
    Tape t;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(t.parameter(p));
    Var loss = build(t, vars);
    t.backward(loss);
    for (const auto& v : vars) analytic.push_back(v.grad() ? *v.grad() : Tensor(v.value().shape));
  }
  auto eval = [&] {
    Tape t;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(t.constant(p));
    return build(t, vars).value().data[0];
  };
  GradCheck out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double keep = params[i].data[j];
      params[i].data[j] = keep + eps;
      const double up = eval();
      params[i].data[j] = keep - eps;
      const double down = eval();
      params[i].data[j] = keep;
      const double fd = (up - down) / (2.0 * eps);
      const double ad = analytic[i].data[j];
      diff2 += (fd - ad) * (fd - ad);
      a2 += ad * ad;
      n2 += fd * fd;
      ++out.checked;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
    if (rel > out.worst) {
      out.worst = rel;
      out.tensor = i;
    }
  }
  return out;
}

/// Same check for a whole model: the loss is BCE of the forward output
/// against `target`, differentiated with respect to every control tensor.
inline GradCheck model_gradient_check(splitnet::ControlVariables theta, const splitnet::SolverConfig& cfg,
                                      const Tensor& image, const Tensor& target, double eps = 1e-6,
                                      double floor = 1e-8) {
  using namespace splitnet;
  std::vector<Tensor> analytic;
  {
    ad::Tape t;
    const auto vars = tape::bind(t, theta, true);
    t.backward(ad::bce_loss(tape::forward(t.constant(image), vars, cfg), target));
    tape::for_each_var(vars, [&](const ad::Var& v) {
      analytic.push_back(v.grad() ? *v.grad() : Tensor(v.value().shape));
    });
  }
  auto eval = [&] {
    ad::Tape t;
    const auto vars = tape::bind(t, theta, false);
    return ad::bce_loss(tape::forward(t.constant(image), vars, cfg), target).value().data[0];
  };
  GradCheck out;
  std::size_t index = 0;
  for_each_tensor(theta, cfg, [&](const TensorInfo&, Tensor& p) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double keep = p.data[j];
      p.data[j] = keep + eps;
      const double up = eval();
      p.data[j] = keep - eps;
      const double down = eval();
      p.data[j] = keep;
      const double fd = (up - down) / (2.0 * eps);
      const double ad = analytic[index].data[j];
      diff2 += (fd - ad) * (fd - ad);
      a2 += ad * ad;
      n2 += fd * fd;
      ++out.checked;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
    if (rel > out.worst) {
      out.worst = rel;
      out.tensor = index;
    }
    ++index;
  });
  return out;
}

}  // namespace testing
