#pragma once

#include <Eigen/Dense>
#include <vector>

#include "splitnet/field.hpp"

namespace splitnet {

/// One sequential stage m of the hybrid scheme with c_m parallel pathways.
///
/// Operators act on the flattened single-channel field. An empty matrix or
/// vector stands for the zero operator.
struct HybridStage {
  std::vector<std::vector<Eigen::MatrixXd>> explicit_ops;  // A^m_{k,s}: [k][s], c_m x c_{m-1}
  std::vector<Eigen::MatrixXd> implicit_ops;               // S^m_k: [k]
  std::vector<Eigen::VectorXd> sources;                    // f^m_k: [k]

  int pathways() const { return static_cast<int>(explicit_ops.size()); }
};

/// Linear operator table for u_t + sum_m (sum A + sum S + sum f) = 0.
struct OperatorTable {
  int dim = 0;  // unknowns per field
  std::vector<HybridStage> stages;

  /// Throws ValidationError on pathway-count or size mismatches, including a
  /// last stage with more than one pathway.
  void validate() const;
  bool all_zero() const;
};

/// Advances u^n to u^{n+1}: stage m computes, for k = 1..c_m,
///   (I + c_m dt S_k) u_k = u^{prev} - c_m dt (sum_s A_{k,s} u_s^{prev} + f_k)
/// and then averages the pathways in index order.
Eigen::VectorXd hybrid_step(const Eigen::VectorXd& u, const OperatorTable& ops, double dt);
Field hybrid_step(const Field& u, const OperatorTable& ops, double dt);

/// Repeated hybrid steps with the implicit solves factorized once.
class HybridIntegrator {
 public:
  HybridIntegrator(const OperatorTable& ops, double dt);
  Eigen::VectorXd step(const Eigen::VectorXd& u) const;
  Eigen::VectorXd run(Eigen::VectorXd u, int steps) const;

 private:
  const OperatorTable* ops_;
  double dt_;
  std::vector<std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>>> solves_;  // per stage, per pathway
  std::vector<std::vector<bool>> has_implicit_;
};

}  // namespace splitnet
