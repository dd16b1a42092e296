#pragma once

#include <string>
#include <vector>

#include "splitnet/field.hpp"

namespace splitnet {

/// How the right branch combines skip fields with the upsampled coarse
/// solution when it enters level j.
enum class RelaxMode {
  skip_average,   // u_k = 1/2 v_k^{j,L_j} + 1/2 U(u^{j+1});       c_j pathways
  paper_literal,  // u_k = 1/2 U(u_k^{j+1}) + 1/2 U(u^{j+1});     c_{j+1} pathways
  concat,         // [v_1..v_{c_j}, U(u_1^{j+1})..U(u_{c_{j+1}}^{j+1})]
};

enum class FinalMode { two_step, iterate };

/// Implicit solve of the logit term at the end of a step.
struct FinalPolicy {
  FinalMode mode = FinalMode::two_step;
  double tol = 1e-10;
  int max_iter = 10000;
  double damping = 0.0;  // 0 selects min(1, 2 dt)

  double damping_for(double dt) const;
};

std::string to_string(RelaxMode m);
std::string to_string(FinalMode m);
RelaxMode parse_relax_mode(const std::string& s);
FinalMode parse_final_mode(const std::string& s);

/// Shape of the V-cycle solver: grid levels, sequential and parallel
/// splitting counts, time stepping, and the sampling choices.
struct SolverConfig {
  int levels = 2;                  // J
  std::vector<int> substeps{1, 1}; // L_j, j = 1..J
  std::vector<int> widths{2, 2};   // c_j, j = 1..J
  std::vector<int> kernel_sizes{3, 3};
  double dt = 1.0;                 // time step
  int steps = 1;                   // N
  DownMode down = DownMode::average;
  UpMode up = UpMode::nearest;
  RelaxMode relax = RelaxMode::skip_average;
  FinalPolicy final_policy;

  double horizon() const { return dt * steps; }  // T = N dt

  /// Throws ValidationError listing every problem found.
  void validate() const;
  std::vector<std::string> problems() const;

  int width(int j) const;          // c_j with c_0 = 1
  int substep_count(int j) const;  // L_j
  int kernel_size(int j) const;

  /// c_{j,l}: c_{j-1} for l = 1, else c_j.
  int left_inputs(int j, int l) const;
  /// Pathways entering right-branch sub-step (j, l). For l = 1 this depends
  /// on the relaxation mode; for l > 1 it is c_j.
  int right_inputs(int j, int l) const;

  /// Time-scale factors multiplying dt in each sub-step: 2^{j-1} c_j on the
  /// left, 2^{j-1} times the sub-step's input count on the right.
  double left_gamma(int j) const;
  double right_gamma(int j, int l) const;
};

/// Five levels, two sub-steps per level, widths 64..1024, max-pool down,
/// transpose-conv up, one time step, two-step sigmoid head. `scale`
/// multiplies every width (1/16 gives 4..64).
SolverConfig unet_preset(double scale = 1.0);

}  // namespace splitnet
