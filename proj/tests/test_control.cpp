// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <limits>

#include "common.hpp"
#include "piezoctrl/oracles.hpp"

using namespace piezoctrl;

namespace
{

ZMetric SmallMetric(int faces, int steps, double dt, std::mt19937 &rng)
{
  std::uniform_real_distribution<double> d(0.5, 2.0);
  std::vector<double> a(faces);
  for (auto &x : a)
    x = d(rng);
  return ZMetric(a, dt, steps);
}

}  // namespace

TEST(ZMetric, Basics)
{
  ZMetric m({0.7}, 0.2, 1);
  ControlTrajectory z = m.Zero();
  EXPECT_EQ(m.Norm(z), 0.0);
  z.values(0, 1) = 3.0;
  EXPECT_NEAR(m.Inner(z, z), 0.7 * 9.0 / 0.2, 1e-13);
  std::mt19937 rng(1);
  const ZMetric m2 = SmallMetric(5, 7, 0.1, rng);
  const ControlTrajectory r = fixtures::SmoothRandomControl(m2, rng);
  EXPECT_NEAR(m2.Inner(r, r), m2.Norm(r) * m2.Norm(r), 1e-12 * m2.Inner(r, r));
  EXPECT_THROW(m2.Inner(r, m.Zero()), std::invalid_argument);
  ControlTrajectory wrong_dt = r;
  wrong_dt.dt = 0.2;
  EXPECT_THROW(m2.Norm(wrong_dt), std::invalid_argument);
}

TEST(PairBeta, ClosedForms)
{
  ZMetric m({1.0, 2.0}, 0.25, 1);
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(2, 2);
  ControlTrajectory y = m.Zero();
  EXPECT_EQ(PairBeta(beta, y), 0.0);
  beta.col(1) << 1.5, -0.5;
  y.values.col(1) << 2.0, 4.0;
  // int_0^dt (t/dt)^2 dt = dt / 3
  EXPECT_NEAR(PairBeta(beta, y), 0.25 / 3.0 * (1.5 * 2.0 - 0.5 * 4.0), 1e-15);

  const int N = 10;
  const double dt = 0.1;
  ControlTrajectory yc(2, N, dt);
  Eigen::MatrixXd bc(2, N + 1);
  for (int n = 0; n <= N; n++)
  {
    bc.col(n) << 0.3, 0.9;
    if (n > 0)
      yc.values.col(n) << 1.0, -2.0;
  }
  const double inner = 0.3 * 1.0 - 0.9 * 2.0;
  EXPECT_NEAR(PairBeta(bc, yc), 1.0 * inner - dt / 2 * inner, 1e-14);
}

TEST(Riesz, ZeroBetaGivesAlphaZ)
{
  std::mt19937 rng(2);
  const ZMetric m = SmallMetric(4, 9, 0.05, rng);
  const ControlTrajectory z = fixtures::SmoothRandomControl(m, rng);
  const Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(4, 10);
  const ControlTrajectory g = RieszGradient(m, beta, z, 0.3);
  EXPECT_LT((g.values - 0.3 * z.values).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Riesz, MatchesDenseOracle)
{
  std::mt19937 rng(3);
  const int F = 3, N = 6;
  const ZMetric m = SmallMetric(F, N, 0.2, rng);
  // beta constant in space per step: face integrals are area * b_n
  Eigen::MatrixXd beta(F, N + 1);
  const Eigen::VectorXd b = fixtures::RandomVector(N + 1, rng);
  for (int n = 0; n <= N; n++)
    beta.col(n) = m.Areas() * b[n];
  beta.col(0).setZero();
  // random face-dependent series too
  const Eigen::MatrixXd beta2 = fixtures::RandomMatrix(F, N + 1, rng);
  for (const Eigen::MatrixXd &bb : {beta, beta2})
  {
    const int nv = F * N;
    Eigen::MatrixXd h(nv, nv);
    Eigen::VectorXd r(nv);
    auto unit = [&](int i) {
      ControlTrajectory e = m.Zero();
      e.values(i % F, i / F + 1) = 1.0;
      return e;
    };
    for (int i = 0; i < nv; i++)
    {
      r[i] = PairBeta(bb, unit(i));
      for (int j = 0; j < nv; j++)
        h(i, j) = m.Inner(unit(i), unit(j));
    }
    const Eigen::VectorXd x = h.llt().solve(r);
    ControlTrajectory oracle = m.Zero();
    for (int i = 0; i < nv; i++)
      oracle.values(i % F, i / F + 1) = x[i];
    m.SubtractMean(oracle);
    const ControlTrajectory g = RieszGradient(m, bb, m.Zero(), 1e-4);
    EXPECT_LT((g.values - oracle.values).cwiseAbs().maxCoeff(), 1e-12 * (1 + x.cwiseAbs().maxCoeff()));
    for (int n = 0; n <= N; n++)
      EXPECT_NEAR(m.Integral(g, n), 0.0, 1e-12);
  }
}

TEST(Riesz, LinearInBetaAndZ)
{
  std::mt19937 rng(4);
  const ZMetric m = SmallMetric(5, 8, 0.1, rng);
  const Eigen::MatrixXd b1 = fixtures::RandomMatrix(5, 9, rng), b2 = fixtures::RandomMatrix(5, 9, rng);
  const ControlTrajectory z1 = fixtures::SmoothRandomControl(m, rng), z2 = fixtures::SmoothRandomControl(m, rng);
  const double a = 1e-2;
  const ControlTrajectory lhs = RieszGradient(m, b1 + 2 * b2, z1 + 2 * z2, a);
  const ControlTrajectory rhs = RieszGradient(m, b1, z1, a) + 2.0 * RieszGradient(m, b2, z2, a);
  EXPECT_LT((lhs.values - rhs.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Riesz, GradientRepresentsPairing)
{
  // [[g, y]] = pair(beta, y) + alpha [[z, y]] for zero-mean y
  std::mt19937 rng(5);
  const ZMetric m = SmallMetric(6, 10, 0.1, rng);
  const Eigen::MatrixXd b = fixtures::RandomMatrix(6, 11, rng);
  const ControlTrajectory z = fixtures::SmoothRandomControl(m, rng);
  const ControlTrajectory g = RieszGradient(m, b, z, 0.5);
  for (int t = 0; t < 3; t++)
  {
    const ControlTrajectory y = fixtures::SmoothRandomControl(m, rng);
    EXPECT_NEAR(m.Inner(g, y), PairBeta(b, y) + 0.5 * m.Inner(z, y), 1e-11);
  }
}

TEST(Structure, MetricMatrixIsBlockTridiagonalWithDiagonalBlocks)
{
  std::mt19937 rng(6);
  const ZMetric m = SmallMetric(7, 9, 0.1, rng);
  const SparseMatrix h = m.Matrix();
  for (int c = 0; c < h.outerSize(); c++)
    for (SparseMatrix::InnerIterator it(h, c); it; ++it)
    {
      const int ni = it.row() / 7, nj = it.col() / 7;
      EXPECT_LE(std::abs(ni - nj), 1);
      EXPECT_EQ(it.row() % 7, it.col() % 7);
    }
}

TEST(ProjectQ, IdempotentOnAdmissible)
{
  std::mt19937 rng(7);
  const ZMetric m = SmallMetric(6, 8, 0.1, rng);
  const ControlTrajectory z = fixtures::SmoothRandomControl(m, rng, 0.2);
  const ProjectionResult r = ProjectQ(m, z, {-1.0, 1.0});
  EXPECT_LT((r.q.values - z.values).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(ProjectQ, UnboundedIsMeanSubtraction)
{
  std::mt19937 rng(8);
  const ZMetric m = SmallMetric(5, 6, 0.1, rng);
  ControlTrajectory z = m.Zero();
  z.values.rightCols(6) = fixtures::RandomMatrix(5, 6, rng);
  const double inf = std::numeric_limits<double>::infinity();
  const ProjectionResult r = ProjectQ(m, z, {-inf, inf});
  ControlTrajectory expect = z;
  m.SubtractMean(expect);
  EXPECT_LT((r.q.values - expect.values).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(r.kkt_residual, 1e-10);
}

TEST(ProjectQ, MatchesBruteForceOnTinyInstances)
{
  std::mt19937 rng(9);
  for (int trial = 0; trial < 20; trial++)
  {
    const int F = 2, N = 1 + trial % 3;
    const ZMetric m = SmallMetric(F, N, 0.3, rng);
    ControlTrajectory z = m.Zero();
    z.values.rightCols(N) = 2.0 * fixtures::RandomMatrix(F, N, rng);
    const double lo = -0.4, hi = 0.7;
    const ProjectionResult r = ProjectQ(m, z, {lo, hi});
    const ControlTrajectory bf = oracle::BruteForceProjection(m, z, lo, hi);
    EXPECT_LT((r.q.values - bf.values).cwiseAbs().maxCoeff(), 1e-9) << trial;
    EXPECT_LT(r.kkt_residual, 1e-10);
  }
  // three faces as well
  for (int trial = 0; trial < 5; trial++)
  {
    const ZMetric m = SmallMetric(3, 2, 0.2, rng);
    ControlTrajectory z = m.Zero();
    z.values.rightCols(2) = 2.0 * fixtures::RandomMatrix(3, 2, rng);
    const ProjectionResult r = ProjectQ(m, z, {-0.3, 0.5});
    const ControlTrajectory bf = oracle::BruteForceProjection(m, z, -0.3, 0.5);
    EXPECT_LT((r.q.values - bf.values).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(ProjectQ, ProjectionPropertiesOnLargerInstances)
{
  std::mt19937 rng(10);
  for (int trial = 0; trial < 20; trial++)
  {
    const ZMetric m = SmallMetric(8 + trial % 5, 10 + trial, 0.05, rng);
    ControlTrajectory z = m.Zero();
    z.values.rightCols(m.Steps()) = fixtures::RandomMatrix(m.NumFaces(), m.Steps(), rng);
    const ControlBounds b{-0.3, 0.4};
    const ProjectionResult r = ProjectQ(m, z, b);
    EXPECT_TRUE(IsAdmissible(m, r.q, b, 1e-11));
    EXPECT_LT(r.kkt_residual, 1e-10);
    const ProjectionResult rr = ProjectQ(m, r.q, b);
    EXPECT_LT(m.Norm(rr.q - r.q), 1e-11);
    for (int k = 0; k < 5; k++)
    {
      ControlTrajectory q = fixtures::SmoothRandomControl(m, rng, 0.05);
      ASSERT_TRUE(IsAdmissible(m, q, b));
      EXPECT_LE(m.Inner(z - r.q, q - r.q), 1e-10 * m.Norm(z - r.q) * m.Norm(q - r.q));
    }
  }
}

TEST(ProjectQ, RejectsInfeasibleBounds)
{
  ZMetric m({1.0, 1.0}, 0.1, 2);
  EXPECT_THROW(ProjectQ(m, m.Zero(), {0.1, 1.0}), std::invalid_argument);
  EXPECT_THROW(ProjectQ(m, m.Zero(), {-1.0, -0.1}), std::invalid_argument);
}
