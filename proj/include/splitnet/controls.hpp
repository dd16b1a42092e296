#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "splitnet/solver_config.hpp"
#include "splitnet/tensor.hpp"

namespace splitnet {

/// Decomposed control variables of one time step.
///
/// Index vectors are 0-based in storage; names produced by
/// for_each_tensor use 1-based (j, l) indices.
struct StepControls {
  // [j-1][l-1]: bank (c_j, c_{j,l}, k_j, k_j) and bias (c_j)
  std::vector<std::vector<Tensor>> left_kernels;
  std::vector<std::vector<Tensor>> left_bias;
  // [j-1][l-1] for j = 1..J-1: bank (c_j, right_inputs(j,l), k_j, k_j)
  std::vector<std::vector<Tensor>> right_kernels;
  std::vector<std::vector<Tensor>> right_bias;
  Tensor final_kernel;  // (1, c_1, k_1, k_1)
  Tensor final_bias;    // (1)
  // [j-1] for j = 1..J-1, only with transpose-conv upsampling: (1, 2, 2)
  std::vector<Tensor> up_kernels;
};

/// All control variables of the N-step solver plus the initial-condition
/// kernels A0 (1, 3, k_1, k_1).
struct ControlVariables {
  Tensor initial_kernel;
  std::vector<StepControls> steps;

  /// Zero kernels and biases; transpose-conv upsamplers start as all-ones
  /// (identical to nearest upsampling).
  static ControlVariables zeros(const SolverConfig& cfg);
  /// Uniform kernels scaled so every mapped network weight starts in
  /// (-a, a) around (1/c) * identity, a = 1/(k sqrt(c_in)); zero biases.
  static ControlVariables random(const SolverConfig& cfg, std::uint64_t seed);

  /// Throws ValidationError if any tensor shape disagrees with cfg or any
  /// entry is non-finite.
  void validate(const SolverConfig& cfg) const;

  std::size_t parameter_count() const;
};

/// What a tensor is, for serialization and optimizer scaling.
struct TensorInfo {
  std::string name;  // e.g. "n1/A[2][1]", "A0"
  double gamma_dt;   // factor that multiplies it inside the solver (1 for A0 and U)
};

void for_each_tensor(ControlVariables& theta, const SolverConfig& cfg,
                     const std::function<void(const TensorInfo&, Tensor&)>& fn);
void for_each_tensor(const ControlVariables& theta, const SolverConfig& cfg,
                     const std::function<void(const TensorInfo&, const Tensor&)>& fn);

}  // namespace splitnet
