#pragma once

#include <functional>
#include <string>
#include <vector>

#include "splitnet/autodiff.hpp"
#include "splitnet/controls.hpp"
#include "splitnet/field.hpp"
#include "splitnet/solver_config.hpp"

namespace splitnet {

enum class Activation { relu_projection, sigmoid_implicit, none };
std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

/// One sub-step of the V-cycle: c_out parallel pathways that each read
/// `inputs` fields from the previous sub-step.
struct SubstepSpec {
  double gamma = 1.0;
  std::reference_wrapper<const Tensor> kernels;  // (c_out, inputs, k, k)
  std::reference_wrapper<const Tensor> bias;     // (c_out)
  Activation activation = Activation::relu_projection;
  int inputs = 1;

  /// Throws ValidationError when the kernel bank or bias disagree with
  /// `inputs` or when gamma is not positive.
  void validate() const;
  int outputs() const { return kernels.get().dim(0); }
};

struct FinalResult {
  Field value;
  bool converged = true;
  int iterations = 0;
};

// Eager operations. Pathway fields are the channels of a Field.

/// (1/c) * sum of the channels, summed in channel order.
Field mean_over_pathways(const Field& pathways);

/// max{mean + gamma dt (sum_s A_{k,s} * u_s + b_k), 0} for every pathway k.
Field solve_substep(const Field& u_star, const SubstepSpec& spec, double dt);

/// Explicit part ubar = mean + dt (sum_s A_s * u_s + b), then the implicit
/// logit solve selected by `policy`.
FinalResult solve_final(const Field& u_star, const SubstepSpec& spec, double dt, const FinalPolicy& policy);

/// Right-branch pathways entering level j from level j + 1. `up_kernel` is
/// the (1, 2, 2) transpose-conv kernel, ignored for nearest upsampling.
Field relaxation(const GridPyramid& pyr, const Field& coarse, const Field& skip, RelaxMode mode,
                 const Tensor* up_kernel = nullptr);

/// One time step U^n -> U^{n+1} on the finest grid.
Field vcycle_step(const Field& u, const StepControls& controls, const SolverConfig& cfg);

/// Builds the grid pyramid a solve on a rows x cols image uses.
GridPyramid make_pyramid(const SolverConfig& cfg, int rows, int cols);

// Differentiable forms. Every eager operation above runs through these, so
// both paths share the same arithmetic.
namespace tape {

/// Control variables of one step as tape nodes.
struct StepVars {
  std::vector<std::vector<ad::Var>> left_kernels, left_bias;
  std::vector<std::vector<ad::Var>> right_kernels, right_bias;
  ad::Var final_kernel, final_bias;
  std::vector<ad::Var> up_kernels;
};

/// Parameters are registered as trainable parameters or as constants.
StepVars bind(ad::Tape& t, const StepControls& controls, bool trainable);

/// Optional record of intermediate pathway fields, in execution order.
struct Trace {
  struct Entry {
    std::string label;  // e.g. "left j=2 l=1"
    int level = 1;
    ad::Var pathways;
  };
  std::vector<Entry> entries;
};

/// Where a sub-step sits, for diagnostics.
struct Site {
  std::string branch;
  int level = 0;
  int substep = 0;
  std::string label() const;
};

ad::Var substep(ad::Var u_star, ad::Var kernels, ad::Var bias, double gamma_dt, const Site& site);

struct FinalOutcome {
  ad::Var value;
  bool converged = true;
  int iterations = 0;
};
FinalOutcome final_step(ad::Var u_star, ad::Var kernel, ad::Var bias, double dt, const FinalPolicy& policy);

ad::Var upsample(ad::Var coarse, UpMode mode, const ad::Var* kernel);
ad::Var downsample(ad::Var fine, DownMode mode);
ad::Var relaxation(ad::Var coarse, ad::Var skip, RelaxMode mode, UpMode up, const ad::Var* up_kernel);

/// One V-cycle step on a (1, rows, cols) node. Throws InvariantViolation if a
/// pre-activation turns non-finite or the output leaves (0, 1).
ad::Var vcycle_step(ad::Var u, const StepVars& vars, const SolverConfig& cfg, Trace* trace = nullptr,
                    bool* final_converged = nullptr);

}  // namespace tape

}  // namespace splitnet
