#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "splitnet/controls.hpp"
#include "splitnet/field.hpp"
#include "splitnet/hybrid.hpp"
#include "splitnet/solver.hpp"
#include "splitnet/solver_config.hpp"

namespace splitnet {

// First-order convergence ---------------------------------------------------

struct ConvergenceProblem {
  std::string name;
  OperatorTable table;
  Eigen::VectorXd u0;
  double horizon = 1.0;  // T
  /// Closed-form u(T) when one exists; otherwise a fine-step reference of
  /// the same scheme is used.
  std::function<Eigen::VectorXd(double)> exact;
};

struct ConvergenceReport {
  std::string problem;
  std::vector<double> dts;     // strictly decreasing
  std::vector<double> errors;  // sup-norm at T
  double reference_dt = 0.0;   // 0 when the closed form was used
  double slope = 0.0;          // NaN for the degenerate case
  bool degenerate = false;     // every error is zero
  bool pass = false;           // slope in [0.8, 1.2] or degenerate

  std::string to_text() const;
};

/// Throws ValidationError if any non-zero operator fails the symmetry or
/// positivity probes.
void require_spd(const OperatorTable& table, std::uint64_t probe_seed, int probes = 8);

/// dts must be strictly decreasing divisors of T. The reference run uses
/// min(dts) / 64.
ConvergenceReport convergence_study(const ConvergenceProblem& problem, const std::vector<double>& dts,
                                    std::uint64_t probe_seed = 7);

/// Dyadic time steps T/2^a, ..., T/2^b.
std::vector<double> dyadic_steps(double horizon, int first_power, int last_power);

/// u' = -u with u(0) = 1, one stage with one pathway; exact e^{-T}.
ConvergenceProblem scalar_decay_problem(double horizon = 1.0);
/// Two stages with pathway counts (1, 2, 1) of random diagonal SPD
/// operators on a rows x cols field.
ConvergenceProblem diagonal_two_stage_problem(int rows = 4, int cols = 4, std::uint64_t seed = 11,
                                              double horizon = 1.0);

// Building-block equivalence -------------------------------------------------

/// Direct-summation "same" cross-correlation used as an independent oracle.
Tensor reference_conv2d(const Tensor& x, const Tensor& bank);

struct EquivalenceReport {
  int trials = 0;
  double max_deviation = 0.0;
  std::string worst;  // description of the worst trial
  double tolerance = 1e-12;
  bool pass() const { return max_deviation <= tolerance; }
  std::string to_text() const;
};

/// Compares solve_substep with ReLU(sum W_s * u_s + b) under the mapped
/// weights on `trials` random inputs. `perturbation` is added to every
/// mapped weight to exercise the harness itself.
EquivalenceReport block_equivalence_check(const SubstepSpec& spec, double dt, int trials, std::uint64_t seed,
                                          double perturbation = 0.0);
/// Same for the sigmoid head: solve_final(two_step) against
/// Sig((sum W_s * u_s + b - 1/2) / dt).
EquivalenceReport final_equivalence_check(const SubstepSpec& spec, double dt, int trials, std::uint64_t seed);
/// Random sub-step specs with up to `max_pathways` pathways on grids up to
/// max_size x max_size; every fifth spec is a sigmoid head.
EquivalenceReport equivalence_sweep(int specs, std::uint64_t seed, int max_size = 16, int max_pathways = 8);

/// Plain conv+ReLU network with max/avg pooling, upsampling and skips,
/// evaluated directly from mapped weights with its own loops.
Field unet_reference_forward(const Field& image, const ControlVariables& weights, const SolverConfig& cfg);

// Architecture audit -----------------------------------------------------------

struct AuditCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct AuditReport {
  std::vector<AuditCheck> checks;
  bool pass() const;
  const AuditCheck* find(const std::string& name) const;
  std::string to_text() const;
};

/// Checks the descriptor of cfg against the canonical UNet: five levels, two
/// encoder and two decoder convolutions per level, doubling widths starting
/// at 64 (or a uniform scaling of them), max-pool down, transpose-conv up,
/// a skip into every decoder level, ReLU layers, a sigmoid head, one step.
AuditReport architecture_audit(const SolverConfig& cfg);

// Fixed-point behaviour -------------------------------------------------------

struct FixedPointProbe {
  double ubar = 0.0;
  double dt = 1.0;
  double damping = 1.0;
  double first_iterate = 0.0;  // p^1 with undamped iteration from p^0 = ubar
  bool converged = false;
  int iterations = 0;
  double value = 0.0;          // returned p
  double oracle = 0.0;         // bisection root
  double oracle_error = 0.0;   // |p - oracle|
  double residual = 0.0;       // |(p - ubar)/dt + ln(p / (1 - p))|
};

struct FixedPointReport {
  std::vector<FixedPointProbe> probes;
  bool first_iterate_half = true;  // p^1 = 0.5 exactly for every probe
  std::string to_text() const;
};

/// Root of p = Sig((ubar - p) / dt) by bisection on (0, 1).
double fixed_point_oracle(double ubar, double dt);

/// damping <= 0 selects min(1, 2 dt) per probe.
FixedPointReport fixedpoint_diagnostics(const std::vector<double>& ubars, const std::vector<double>& dts,
                                        double damping, double tol = 1e-12, int max_iter = 100000);

}  // namespace splitnet
