#include "splitnet/hybrid.hpp"

#include <string>

#include "splitnet/error.hpp"

namespace splitnet {

namespace {

std::string where(std::size_t m, std::size_t k) {
  return "stage " + std::to_string(m + 1) + " pathway " + std::to_string(k + 1);
}

}  // namespace

void OperatorTable::validate() const {
  if (dim < 1) throw ValidationError("operator table needs a positive field size");
  if (stages.empty()) throw ValidationError("operator table needs at least one stage");
  int prev = 1;
  for (std::size_t m = 0; m < stages.size(); ++m) {
    const HybridStage& st = stages[m];
    const int c = st.pathways();
    if (c < 1) throw ValidationError("stage " + std::to_string(m + 1) + " has no pathways");
    if (!st.implicit_ops.empty() && static_cast<int>(st.implicit_ops.size()) != c)
      throw ValidationError("stage " + std::to_string(m + 1) + " has " + std::to_string(st.implicit_ops.size()) +
                            " implicit operators for " + std::to_string(c) + " pathways");
    if (!st.sources.empty() && static_cast<int>(st.sources.size()) != c)
      throw ValidationError("stage " + std::to_string(m + 1) + " has " + std::to_string(st.sources.size()) +
                            " sources for " + std::to_string(c) + " pathways");
    for (std::size_t k = 0; k < st.explicit_ops.size(); ++k) {
      const auto& row = st.explicit_ops[k];
      if (static_cast<int>(row.size()) != prev)
        throw ValidationError(where(m, k) + " has " + std::to_string(row.size()) +
                              " explicit operators, previous stage has " + std::to_string(prev) + " pathways");
      for (const auto& a : row)
        if (a.size() != 0 && (a.rows() != dim || a.cols() != dim))
          throw ValidationError(where(m, k) + " explicit operator is not " + std::to_string(dim) + "x" +
                                std::to_string(dim));
      if (!st.implicit_ops.empty()) {
        const auto& s = st.implicit_ops[k];
        if (s.size() != 0 && (s.rows() != dim || s.cols() != dim))
          throw ValidationError(where(m, k) + " implicit operator has the wrong size");
      }
      if (!st.sources.empty() && st.sources[k].size() != 0 && st.sources[k].size() != dim)
        throw ValidationError(where(m, k) + " source has the wrong size");
    }
    prev = c;
  }
  if (prev != 1) throw ValidationError("the last stage must have exactly one pathway");
}

bool OperatorTable::all_zero() const {
  auto zero = [](const auto& x) { return x.size() == 0 || x.isZero(0.0); };
  for (const auto& st : stages) {
    for (const auto& row : st.explicit_ops)
      for (const auto& a : row)
        if (!zero(a)) return false;
    for (const auto& s : st.implicit_ops)
      if (!zero(s)) return false;
    for (const auto& f : st.sources)
      if (!zero(f)) return false;
  }
  return true;
}

HybridIntegrator::HybridIntegrator(const OperatorTable& ops, double dt) : ops_(&ops), dt_(dt) {
  ops.validate();
  if (!(dt > 0.0)) throw ValidationError("time step must be positive");
  for (const auto& st : ops.stages) {
    const double scale = st.pathways() * dt;
    auto& solves = solves_.emplace_back();
    auto& flags = has_implicit_.emplace_back();
    for (int k = 0; k < st.pathways(); ++k) {
      const bool implicit = !st.implicit_ops.empty() && st.implicit_ops[k].size() != 0;
      flags.push_back(implicit);
      if (implicit) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(ops.dim, ops.dim) + scale * st.implicit_ops[k];
        solves.emplace_back(m);
      } else {
        solves.emplace_back();
      }
    }
  }
}

Eigen::VectorXd HybridIntegrator::step(const Eigen::VectorXd& u) const {
  if (u.size() != ops_->dim) throw ValidationError("field size does not match the operator table");
  std::vector<Eigen::VectorXd> prev{u};
  Eigen::VectorXd avg = u;
  for (std::size_t m = 0; m < ops_->stages.size(); ++m) {
    const HybridStage& st = ops_->stages[m];
    const double scale = st.pathways() * dt_;
    std::vector<Eigen::VectorXd> next(static_cast<std::size_t>(st.pathways()));
    for (std::size_t k = 0; k < next.size(); ++k) {
      Eigen::VectorXd drive = Eigen::VectorXd::Zero(ops_->dim);
      for (std::size_t s = 0; s < prev.size(); ++s)
        if (st.explicit_ops[k][s].size() != 0) drive += st.explicit_ops[k][s] * prev[s];
      if (!st.sources.empty() && st.sources[k].size() != 0) drive += st.sources[k];
      Eigen::VectorXd rhs = avg - scale * drive;
      next[k] = has_implicit_[m][k] ? Eigen::VectorXd(solves_[m][k].solve(rhs)) : rhs;
    }
    avg = next[0];
    for (std::size_t k = 1; k < next.size(); ++k) avg += next[k];
    avg /= static_cast<double>(next.size());
    prev = std::move(next);
  }
  return avg;
}

Eigen::VectorXd HybridIntegrator::run(Eigen::VectorXd u, int steps) const {
  for (int n = 0; n < steps; ++n) u = step(u);
  return u;
}

Eigen::VectorXd hybrid_step(const Eigen::VectorXd& u, const OperatorTable& ops, double dt) {
  return HybridIntegrator(ops, dt).step(u);
}

Field hybrid_step(const Field& u, const OperatorTable& ops, double dt) {
  if (u.channels != 1) throw ValidationError("hybrid_step works on single-channel fields");
  const Eigen::VectorXd out =
      hybrid_step(Eigen::Map<const Eigen::VectorXd>(u.values.data(), static_cast<Eigen::Index>(u.values.size())),
                  ops, dt);
  return Field(u.grid, 1, std::vector<double>(out.data(), out.data() + out.size()));
}

}  // namespace splitnet
