#include <doctest.h>

#include "splitnet/error.hpp"
#include "splitnet/hybrid.hpp"
#include "support.hpp"

using namespace splitnet;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd diag(std::initializer_list<double> d) {
  VectorXd v(static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (double x : d) v[i++] = x;
  return v.asDiagonal();
}

}  // namespace

TEST_CASE("zero operators leave the state unchanged") {
  OperatorTable ops;
  ops.dim = 4;
  HybridStage s1;
  s1.explicit_ops = {{MatrixXd()}, {MatrixXd()}};
  HybridStage s2;
  s2.explicit_ops = {{MatrixXd(), MatrixXd::Zero(4, 4)}};
  ops.stages = {s1, s2};
  CHECK(ops.all_zero());
  const VectorXd u = VectorXd::LinSpaced(4, -1, 2);
  CHECK(hybrid_step(u, ops, 0.1) == u);
}

TEST_CASE("scalar explicit step") {
  OperatorTable ops;
  ops.dim = 1;
  HybridStage st;
  const double a = 0.8, dt = 0.05;
  st.explicit_ops = {{MatrixXd::Constant(1, 1, a)}};
  ops.stages = {st};
  // u_t + a u = 0 gives the explicit Euler factor (1 - a dt).
  CHECK(hybrid_step(VectorXd::Constant(1, 2.0), ops, dt)[0] == doctest::Approx(2.0 * (1 - a * dt)).epsilon(1e-15));
  st.explicit_ops = {{MatrixXd::Constant(1, 1, -a)}};
  ops.stages = {st};
  CHECK(hybrid_step(VectorXd::Constant(1, 2.0), ops, dt)[0] == doctest::Approx(2.0 * (1 + a * dt)).epsilon(1e-15));
}

TEST_CASE("scalar implicit step") {
  OperatorTable ops;
  ops.dim = 1;
  HybridStage st;
  st.explicit_ops = {{MatrixXd()}};
  st.implicit_ops = {MatrixXd::Constant(1, 1, 3.0)};
  st.sources = {VectorXd::Constant(1, 0.5)};
  ops.stages = {st};
  const double dt = 0.1;
  CHECK(hybrid_step(VectorXd::Constant(1, 1.0), ops, dt)[0] ==
        doctest::Approx((1.0 - dt * 0.5) / (1.0 + dt * 3.0)).epsilon(1e-15));
}

TEST_CASE("two-stage update matches the hand-composed oracle") {
  // Stage 1 has two pathways, stage 2 one; operators are diagonal SPD on a
  // 2x2 field, so each solve is a per-entry division.
  const double dt = 0.07;
  const MatrixXd A11 = diag({1.0, 0.5, 2.0, 1.5}), A21 = diag({0.3, 0.9, 1.1, 0.2});
  const MatrixXd S1 = diag({0.7, 1.2, 0.4, 2.0}), S2 = diag({1.0, 1.0, 0.6, 0.8});
  const MatrixXd B1 = diag({0.4, 0.6, 0.8, 1.0}), B2 = diag({1.3, 0.2, 0.5, 0.9});
  const MatrixXd T = diag({0.9, 0.1, 1.7, 0.6});
  const VectorXd f1 = VectorXd::Constant(4, 0.2), f2 = VectorXd::LinSpaced(4, -0.1, 0.3);

  OperatorTable ops;
  ops.dim = 4;
  HybridStage s1;
  s1.explicit_ops = {{A11}, {A21}};
  s1.implicit_ops = {S1, S2};
  s1.sources = {f1, f2};
  HybridStage s2;
  s2.explicit_ops = {{B1, B2}};
  s2.implicit_ops = {T};
  ops.stages = {s1, s2};

  const VectorXd u = (VectorXd(4) << 0.25, 0.5, 0.75, 1.0).finished();
  VectorXd want(4);
  for (int i = 0; i < 4; ++i) {
    const double c = 2 * dt;
    const double p1 = (u[i] - c * (A11(i, i) * u[i] + f1[i])) / (1 + c * S1(i, i));
    const double p2 = (u[i] - c * (A21(i, i) * u[i] + f2[i])) / (1 + c * S2(i, i));
    const double mid = 0.5 * (p1 + p2);
    want[i] = (mid - dt * (B1(i, i) * p1 + B2(i, i) * p2)) / (1 + dt * T(i, i));
  }
  CHECK((hybrid_step(u, ops, dt) - want).cwiseAbs().maxCoeff() < 1e-15);

  const HybridIntegrator integ(ops, dt);
  CHECK((integ.step(u) - hybrid_step(u, ops, dt)).cwiseAbs().maxCoeff() < 1e-15);
  VectorXd twice = hybrid_step(hybrid_step(u, ops, dt), ops, dt);
  CHECK((integ.run(u, 2) - twice).cwiseAbs().maxCoeff() < 1e-15);

  Field f(GridSpec{1, 2, 2, 1.0}, 1, std::vector<double>(u.data(), u.data() + 4));
  const Field g = hybrid_step(f, ops, dt);
  for (int i = 0; i < 4; ++i) CHECK(g.values[static_cast<std::size_t>(i)] == doctest::Approx(want[i]).epsilon(1e-14));
}

TEST_CASE("operator tables are validated") {
  OperatorTable ops;
  ops.dim = 2;
  HybridStage wide;
  wide.explicit_ops = {{MatrixXd()}, {MatrixXd()}};
  ops.stages = {wide};
  CHECK_THROWS_AS(ops.validate(), ValidationError);  // last stage must have one pathway

  HybridStage bad;
  bad.explicit_ops = {{MatrixXd::Identity(3, 3)}};
  ops.stages = {bad};
  CHECK_THROWS_AS(ops.validate(), ValidationError);

  HybridStage miscount;
  miscount.explicit_ops = {{MatrixXd(), MatrixXd()}};
  ops.stages = {miscount};
  CHECK_THROWS_AS(ops.validate(), ValidationError);

  ops.stages.clear();
  CHECK_THROWS_AS(ops.validate(), ValidationError);

  HybridStage ok;
  ok.explicit_ops = {{MatrixXd::Identity(2, 2)}};
  ops.stages = {ok};
  CHECK_NOTHROW(ops.validate());
  CHECK_THROWS_AS(hybrid_step(VectorXd::Zero(3), ops, 0.1), ValidationError);
}
