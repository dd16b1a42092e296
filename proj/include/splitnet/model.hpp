#pragma once

#include <utility>
#include <vector>

#include "splitnet/autodiff.hpp"
#include "splitnet/controls.hpp"
#include "splitnet/field.hpp"
#include "splitnet/solver.hpp"
#include "splitnet/solver_config.hpp"

namespace splitnet {

/// Replicates a grayscale image to three channels; three-channel images
/// pass through. Other channel counts throw ValidationError.
Field as_rgb(const Field& f);

/// u(., 0) = Sig(sum_k A0_k * f^k).
Field initial_condition(const Field& f, const Tensor& a0);

/// f -> u0 -> U^1 -> ... -> U^N, using the step-n controls at step n.
Field forward(const Field& f, const ControlVariables& theta, const SolverConfig& cfg);

namespace tape {

struct ModelVars {
  ad::Var initial_kernel;
  std::vector<StepVars> steps;
};

ModelVars bind(ad::Tape& t, const ControlVariables& theta, bool trainable);

/// `f` is a (3, rows, cols) node. `steps` overrides cfg.steps when positive
/// and must not exceed the number of parameter sets.
ad::Var forward(ad::Var f, const ModelVars& vars, const SolverConfig& cfg, Trace* trace = nullptr, int steps = 0);

/// Visits every parameter node in the same order as for_each_tensor.
void for_each_var(const ModelVars& vars, const std::function<void(const ad::Var&)>& fn);

}  // namespace tape

/// W_s = (1/c) delta + gamma_dt A_s and b = gamma_dt bhat for one sub-step,
/// where c is the number of input pathways and delta the centred unit kernel.
std::pair<Tensor, Tensor> map_block(const Tensor& kernels, const Tensor& bias, double gamma_dt);
/// Inverse of map_block.
std::pair<Tensor, Tensor> unmap_block(const Tensor& weights, const Tensor& bias, double gamma_dt);

/// Conv+ReLU weight bank for every sub-step and the head, stored in the same
/// container layout as the control variables. A0 and the upsampling kernels
/// carry over unchanged.
ControlVariables map_to_network_weights(const ControlVariables& theta, const SolverConfig& cfg);
ControlVariables map_from_network_weights(const ControlVariables& weights, const SolverConfig& cfg);

}  // namespace splitnet
