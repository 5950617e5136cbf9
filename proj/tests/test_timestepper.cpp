// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "common.hpp"
#include "piezoctrl/oracles.hpp"

using namespace piezoctrl;

namespace
{

// Dense potential map psi = S u + P e (grounded), by the normal-equations-free saddle solve.
struct DenseReduction
{
  Eigen::MatrixXd S, P;
};

DenseReduction Reduce(const DiscreteOperators &ops)
{
  const int np = ops.NumPsi();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(np + 1, np + 1);
  a.topLeftCorner(np, np) = Eigen::MatrixXd(ops.k_psipsi);
  a.block(0, np, np, 1) = ops.grounding;
  a.block(np, 0, 1, np) = ops.grounding.transpose();
  const Eigen::MatrixXd inv = a.inverse();
  DenseReduction r;
  r.P = inv.topLeftCorner(np, np);
  r.S = r.P * Eigen::MatrixXd(ops.k_psiu);
  return r;
}

}  // namespace

TEST(Stepper, ZeroDataGivesZeroState)
{
  const auto ops = CubeOperators(1, 2, fixtures::ClampY, BenchmarkMaterials());
  CrankNicolson cn(ops, 0.1);
  ControlTrajectory z(ops->NumFaces(), 5, 0.1);
  const StateTrajectory st = SolveState(cn, z);
  ASSERT_EQ(st.Steps(), 5);
  for (int n = 0; n <= 5; n++)
  {
    EXPECT_EQ(st.u[n].norm(), 0.0);
    EXPECT_EQ(st.psi[n].norm(), 0.0);
    EXPECT_EQ(Energy(*ops, st, n), 0.0);
  }
}

TEST(Stepper, EnergyConservedWithInitialData)
{
  const auto ops = CubeOperators(2, 2, fixtures::ClampY, BenchmarkMaterials());
  CrankNicolson cn(ops, 0.01);
  std::mt19937 rng(4);
  const Eigen::VectorXd u0 = ops->vector->Extend(fixtures::RandomVector(ops->NumU(), rng));
  const Eigen::VectorXd v0 = ops->vector->Extend(fixtures::RandomVector(ops->NumU(), rng));
  const StateTrajectory st = cn.Run(200, {}, u0, v0);
  const double e0 = Energy(*ops, st, 0);
  EXPECT_GT(e0, 0.0);
  double drift = 0.0;
  for (int n = 1; n <= 200; n++)
  {
    drift = std::max(drift, std::abs(Energy(*ops, st, n) - e0) / e0);
    EXPECT_LT(std::abs(ops->grounding.dot(st.psi[n])), 1e-10 * st.psi[n].norm());
  }
  EXPECT_LT(drift, 1e-10);
}

TEST(Stepper, Linearity)
{
  const auto ops = CubeOperators(1, 2, fixtures::ClampY, BenchmarkMaterials());
  CrankNicolson cn(ops, 0.05);
  ZMetric metric(ops->face_areas, 0.05, 20);
  std::mt19937 rng(8);
  const ControlTrajectory z1 = fixtures::SmoothRandomControl(metric, rng);
  const ControlTrajectory z2 = fixtures::SmoothRandomControl(metric, rng);
  const StateTrajectory a = SolveState(cn, z1), b = SolveState(cn, z2),
                        c = SolveState(cn, z1 + 2.5 * z2);
  for (int n = 0; n <= 20; n++)
  {
    EXPECT_LE((c.u[n] - a.u[n] - 2.5 * b.u[n]).norm(), 1e-11 * std::max(1e-300, c.u[n].norm()));
    EXPECT_LE((c.psi[n] - a.psi[n] - 2.5 * b.psi[n]).norm(),
              1e-11 * std::max(1e-300, c.psi[n].norm()));
  }
}

TEST(Stepper, ReproducesQuadraticSolutionExactly)
{
  // Constant coefficients: every integrand is polynomial and CN is exact for t^2.
  const MaterialSet mat = ConstantMaterials(1.5, 2.0, 3.0, BenchmarkPiezo(), BenchmarkDielectric());
  const auto ops = CubeOperators(2, 2, fixtures::ClampY, mat);
  const ExactSolution ex = QuadraticCase();
  const double dt = 0.125;
  CrankNicolson cn(ops, dt);
  const Forcing f = MakeManufacturedForcing(ops, MakeManufacturedData(mat, ex), ex, dt);
  const StateTrajectory st = cn.Run(8, f);
  for (int n : {1, 4, 8})
  {
    const double t = n * dt;
    const Eigen::VectorXd ue = ops->vector->InterpolateFull([&](const Point &x) { return ex.u(x, t); });
    const Eigen::VectorXd pe = ops->scalar->Interpolate([&](const Point &x) { return ex.psi(x, t); });
    EXPECT_LT((st.u[n] - ue).cwiseAbs().maxCoeff(), 1e-10 * ue.cwiseAbs().maxCoeff());
    EXPECT_LT((st.psi[n] - pe).cwiseAbs().maxCoeff(), 1e-10 * pe.cwiseAbs().maxCoeff());
  }
}

TEST(Stepper, MatchesDenseOdeOracleAtSecondOrder)
{
  // single element, no clamping: M u'' = -(K + K_upsi S) u - K_upsi P e(t)
  auto mesh = std::make_shared<const Mesh>(oracle::SingleTetMesh(
      {Point(0, 0, 0), Point(1, 0, 0), Point(0, 1, 0), Point(0, 0, 1)}));
  auto vs = std::make_shared<const VectorSpace>(std::make_shared<const ScalarSpace>(mesh, 2));
  const MaterialSet mat = ConstantMaterials(1.0, 1.0, 2.0, BenchmarkPiezo(), BenchmarkDielectric());
  auto ops = std::make_shared<const DiscreteOperators>(Assemble(vs, mat));
  const DenseReduction red = Reduce(*ops);
  const Eigen::MatrixXd minv = Eigen::MatrixXd(ops->mass).inverse();
  const Eigen::MatrixXd kt = Eigen::MatrixXd(ops->k_uu) + Eigen::MatrixXd(ops->k_upsi) * red.S;
  const Eigen::MatrixXd kp = Eigen::MatrixXd(ops->k_upsi) * red.P;
  const Eigen::MatrixXd bmat(ops->control);
  Eigen::VectorXd zshape(4);
  zshape << 1.0, -2.0, 0.5, 0.5;
  const double T = 1.0;
  // starts smoothly so that stiff modes are not kicked at t = 0
  auto zt = [&](double t) { return (t * t * t * t * zshape).eval(); };
  auto rhs = [&](double t, const Eigen::VectorXd &y) {
    const int n = static_cast<int>(kt.rows());
    Eigen::VectorXd d(2 * n);
    d.head(n) = y.tail(n);
    d.tail(n) = minv * (-kt * y.head(n) - kp * (-(bmat * zt(t))));
    return d;
  };
  const int n = ops->NumU();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2 * n);
  const int nrk = 200000;
  const double h = T / nrk;
  for (int i = 0; i < nrk; i++)
  {
    const double t = i * h;
    const Eigen::VectorXd k1 = rhs(t, y), k2 = rhs(t + h / 2, y + h / 2 * k1),
                          k3 = rhs(t + h / 2, y + h / 2 * k2), k4 = rhs(t + h, y + h * k3);
    y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  std::vector<double> err;
  for (int N : {40, 80, 160})
  {
    const double dt = T / N;
    CrankNicolson cn(ops, dt);
    ControlTrajectory z(4, N, dt);
    for (int m = 0; m <= N; m++)
      z.values.col(m) = zt(m * dt);
    const StateTrajectory st = SolveState(cn, z);
    err.push_back((st.u[N] - y.head(n)).norm() / y.head(n).norm());
  }
  EXPECT_LT(err[2], 1e-3) << err[0] << " " << err[1] << " " << err[2];
  EXPECT_NEAR(err[0] / err[1], 4.0, 0.4);
  EXPECT_NEAR(err[1] / err[2], 4.0, 0.4);
}

TEST(Adjoint, ZeroMisfitGivesZero)
{
  const auto ops = CubeOperators(1, 2, fixtures::ClampY, BenchmarkMaterials());
  CrankNicolson cn(ops, 0.1);
  std::vector<Eigen::VectorXd> misfit(6, Eigen::VectorXd::Zero(ops->NumU()));
  const AdjointTrajectory adj = SolveAdjoint(cn, misfit);
  EXPECT_EQ(adj.beta.norm(), 0.0);
  for (int n = 0; n <= 5; n++)
  {
    EXPECT_EQ(adj.p[n].norm(), 0.0);
    EXPECT_EQ(adj.xi[n].norm(), 0.0);
  }
}

TEST(Adjoint, MatchesDenseBackwardIntegration)
{
  // Backward CN on the Schur-reduced system written out densely:
  // M p'' = -Kt p + M f, p(T) = p'(T) = 0, xi = S p.
  const auto ops = CubeOperators(1, 2, fixtures::ClampY, BenchmarkMaterials());
  const DenseReduction red = Reduce(*ops);
  const Eigen::MatrixXd m(ops->mass);
  const Eigen::MatrixXd kt = Eigen::MatrixXd(ops->k_uu) + Eigen::MatrixXd(ops->k_upsi) * red.S;
  const int N = 12;
  const double dt = 1.0 / N;
  std::mt19937 rng(21);
  std::vector<Eigen::VectorXd> f(N + 1);
  const Eigen::VectorXd f0 = fixtures::RandomVector(ops->NumU(), rng);
  const Eigen::VectorXd f1 = fixtures::RandomVector(ops->NumU(), rng);
  for (int k = 0; k <= N; k++)
    f[k] = std::cos(3.0 * k * dt) * f0 + k * dt * f1;

  CrankNicolson cn(ops, dt);
  const AdjointTrajectory adj = SolveAdjoint(cn, f);

  // (p, q = p') stepped from n to n-1: trapezoid on p' = q, M q' = -Kt p + M f
  const int nu = ops->NumU();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * nu, 2 * nu), b = a;
  a.topLeftCorner(nu, nu) = m;
  a.topRightCorner(nu, nu) = (dt / 2) * m;  // going backward: p_{n-1} = p_n - dt/2 (q_{n-1} + q_n)
  a.bottomLeftCorner(nu, nu) = -(dt / 2) * kt;
  a.bottomRightCorner(nu, nu) = m;
  b.topLeftCorner(nu, nu) = m;
  b.topRightCorner(nu, nu) = -(dt / 2) * m;
  b.bottomLeftCorner(nu, nu) = (dt / 2) * kt;
  b.bottomRightCorner(nu, nu) = m;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2 * nu);
  for (int k = N; k >= 1; k--)
  {
    Eigen::VectorXd r = b * y;
    r.tail(nu) -= (dt / 2) * m * (f[k] + f[k - 1]);
    y = lu.solve(r);
    const double scale = std::max(1e-12, y.head(nu).norm());
    EXPECT_LT((adj.p[k - 1] - y.head(nu)).norm(), 1e-9 * scale) << k;
    EXPECT_LT((adj.q[k - 1] - y.tail(nu)).norm(), 1e-9 * std::max(1e-12, y.tail(nu).norm())) << k;
    const Eigen::VectorXd xi = red.S * y.head(nu);
    EXPECT_LT((adj.xi[k - 1] - xi).norm(), 1e-9 * std::max(1e-12, xi.norm())) << k;
  }
  EXPECT_EQ(adj.p[N].norm(), 0.0);
  EXPECT_EQ(adj.q[N].norm(), 0.0);
}

TEST(Adjoint, TranspositionResidualIsSmall)
{
  const auto ops = CubeOperators(1, 2, fixtures::ClampY, BenchmarkMaterials());
  const int N = 32;
  const double dt = 1.0 / N;
  CrankNicolson cn(ops, dt);
  ZMetric metric(ops->face_areas, dt, N);
  std::mt19937 rng(13);
  const ControlTrajectory y = fixtures::SmoothRandomControl(metric, rng);
  const Eigen::VectorXd f0 = fixtures::RandomVector(ops->NumU(), rng);
  std::vector<Eigen::VectorXd> f(N + 1);
  for (int k = 0; k <= N; k++)
    f[k] = std::sin(2.0 * k * dt) * f0;
  const StateTrajectory st = SolveState(cn, y);
  double lhs = 0;
  for (int k = 1; k <= N; k++)
  {
    const Eigen::VectorXd u0 = ops->vector->Restrict(st.u[k - 1]), u1 = ops->vector->Restrict(st.u[k]);
    lhs += dt / 6 * (2 * f[k - 1].dot(ops->mass * u0) + f[k - 1].dot(ops->mass * u1) +
                     f[k].dot(ops->mass * u0) + 2 * f[k].dot(ops->mass * u1));
  }
  const double rhs = PairBeta(SolveAdjoint(cn, f).beta, y);
  EXPECT_GT(std::abs(lhs), 0.0);
  EXPECT_LT(std::abs(lhs - rhs), 1e-2 * std::abs(lhs)) << lhs << " vs " << rhs;
}

TEST(Stepper, RejectsBadInput)
{
  const auto ops = CubeOperators(1, 1, fixtures::ClampY, BenchmarkMaterials());
  EXPECT_THROW(CrankNicolson(ops, 0.0), std::invalid_argument);
  CrankNicolson cn(ops, 0.1);
  EXPECT_THROW(cn.Run(0, {}), std::invalid_argument);
  ControlTrajectory wrong(ops->NumFaces() + 1, 3, 0.1);
  EXPECT_THROW(SolveState(cn, wrong), std::invalid_argument);
}
