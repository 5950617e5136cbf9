// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "common.hpp"

using namespace piezoctrl;

namespace
{

struct Problem
{
  std::shared_ptr<const DiscreteOperators> ops;
  std::shared_ptr<const CrankNicolson> cn;
  ZMetric metric;
};

Problem MakeProblem(int M, int N, double T = 1.0)
{
  Problem s;
  s.ops = CubeOperators(M, 2, fixtures::ClampY, BenchmarkMaterials());
  s.cn = std::make_shared<const CrankNicolson>(s.ops, T / N);
  s.metric = ZMetric(s.ops->face_areas, T / N, N);
  return s;
}

// rho-projection of t^2 y(y-1)(x+y+z) in every component
std::vector<Eigen::VectorXd> ControlStudyDesired(const DiscreteOperators &ops, int N, double dt)
{
  RhoProjector proj(ops);
  std::vector<Eigen::VectorXd> ud(N + 1);
  for (int n = 0; n <= N; n++)
  {
    const double t = n * dt;
    ud[n] = proj.Project(
        [t](const Point &x)
        {
          const double v = t * t * x[1] * (x[1] - 1.0) * (x[0] + x[1] + x[2]);
          return Eigen::Vector3d(v, v, v);
        },
        [](const Point &) { return 1.0; });
  }
  return ud;
}

std::vector<Eigen::VectorXd> ZeroDesired(const DiscreteOperators &ops, int N)
{
  return std::vector<Eigen::VectorXd>(N + 1, Eigen::VectorXd::Zero(ops.NumU()));
}

}  // namespace

TEST(Jfd, ZeroControlZeroTarget)
{
  const Problem s = MakeProblem(1, 4);
  ReducedProblem prob(s.cn, ZeroDesired(*s.ops, 4), 1e-4);
  EXPECT_EQ(EvaluateJfd(prob, s.metric.Zero()), 0.0);
}

TEST(Jfd, ZeroControlIsPureMisfit)
{
  const int N = 6;
  const Problem s = MakeProblem(1, N);
  const auto ud = ControlStudyDesired(*s.ops, N, 1.0 / N);
  ReducedProblem prob(s.cn, ud, 1e-4);
  double expect = 0.0;
  for (int n = 1; n <= N; n++)
  {
    const Eigen::VectorXd mid = 0.5 * (ud[n - 1] + ud[n]);
    expect += ud[n - 1].dot(s.ops->mass * ud[n - 1]) + 4.0 * mid.dot(s.ops->mass * mid) +
              ud[n].dot(s.ops->mass * ud[n]);
  }
  expect *= (1.0 / N) / 12.0;
  EXPECT_NEAR(EvaluateJfd(prob, s.metric.Zero()), expect, 1e-14 * expect);
}

TEST(Jfd, SimpsonExactForLinearTrajectory)
{
  const Problem s = MakeProblem(1, 3);
  std::mt19937 rng(1);
  const Eigen::VectorXd a = fixtures::RandomVector(s.ops->NumU(), rng),
                        b = fixtures::RandomVector(s.ops->NumU(), rng);
  const int N = 5;
  const double dt = 0.3;
  std::vector<Eigen::VectorXd> e(N + 1);
  for (int n = 0; n <= N; n++)
    e[n] = a + n * dt * b;
  const double T = N * dt;
  const double aa = a.dot(s.ops->mass * a), ab = a.dot(s.ops->mass * b), bb = b.dot(s.ops->mass * b);
  const double exact = aa * T + ab * T * T + bb * T * T * T / 3.0;
  EXPECT_NEAR(MisfitIntegral(*s.ops, e, dt), exact, 1e-12 * exact);
}

TEST(Gradient, ZeroMisfitGivesAlphaZ)
{
  const int N = 8;
  const Problem s = MakeProblem(1, N);
  std::mt19937 rng(2);
  const ControlTrajectory zbar = fixtures::SmoothRandomControl(s.metric, rng);
  const StateTrajectory st = SolveState(*s.cn, zbar);
  std::vector<Eigen::VectorXd> ud(N + 1);
  for (int n = 0; n <= N; n++)
    ud[n] = s.ops->vector->Restrict(st.u[n]);
  ReducedProblem prob(s.cn, ud, 0.25);
  const Evaluation ev = EvaluateWithGradient(prob, zbar);
  EXPECT_LT(ev.value - 0.5 * 0.25 * s.metric.Inner(zbar, zbar), 1e-14);
  EXPECT_LT((ev.gradient.values - 0.25 * zbar.values).cwiseAbs().maxCoeff(),
            1e-10 * zbar.values.cwiseAbs().maxCoeff());
}

TEST(Gradient, CentralDifferenceAgreesToSecondOrderInDt)
{
  // j_fd is quadratic, so the central difference is exact up to roundoff; what remains is the
  // optimize-then-discretize gap, which should shrink like dt^2.
  std::vector<std::vector<double>> err;
  for (int N : {16, 32})
  {
    const Problem s = MakeProblem(1, N);
    ReducedProblem prob(s.cn, ControlStudyDesired(*s.ops, N, 1.0 / N), 1e-4);
    std::mt19937 rng(3);
    err.emplace_back();
    for (int trial = 0; trial < 3; trial++)
    {
      const ControlTrajectory z = fixtures::SmoothRandomControl(s.metric, rng, 0.1);
      const ControlTrajectory y = fixtures::SmoothRandomControl(s.metric, rng, 0.1);
      const double eps = 1e-3;
      const double fd = (EvaluateJfd(prob, z + eps * y) - EvaluateJfd(prob, z - eps * y)) / (2 * eps);
      const double an = s.metric.Inner(EvaluateGradient(prob, z), y);
      err.back().push_back(std::abs(fd - an) / std::abs(fd));
    }
  }
  for (int trial = 0; trial < 3; trial++)
  {
    EXPECT_LT(err[1][trial], 5e-3);
    const double ratio = err[0][trial] / err[1][trial];
    EXPECT_GT(ratio, 3.0);
    EXPECT_LT(ratio, 5.0);
  }
}

TEST(Gradient, BetaIsLinearInControlAndTarget)
{
  const int N = 6;
  const Problem s = MakeProblem(1, N);
  std::mt19937 rng(4);
  auto beta = [&](const ControlTrajectory &z, const std::vector<Eigen::VectorXd> &ud)
  {
    ReducedProblem prob(s.cn, ud, 1.0);
    const StateTrajectory st = SolveState(*s.cn, z);
    return SolveAdjoint(*s.cn, Misfit(prob, st)).beta;
  };
  auto rand_target = [&]()
  {
    std::vector<Eigen::VectorXd> ud(N + 1);
    for (auto &v : ud)
      v = fixtures::RandomVector(s.ops->NumU(), rng);
    return ud;
  };
  const ControlTrajectory z1 = fixtures::SmoothRandomControl(s.metric, rng),
                          z2 = fixtures::SmoothRandomControl(s.metric, rng);
  const auto u1 = rand_target(), u2 = rand_target();
  std::vector<Eigen::VectorXd> u12(N + 1);
  for (int n = 0; n <= N; n++)
    u12[n] = u1[n] - 3.0 * u2[n];
  const Eigen::MatrixXd lhs = beta(z1 - 3.0 * z2, u12);
  const Eigen::MatrixXd rhs = beta(z1, u1) - 3.0 * beta(z2, u2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10 * (1 + rhs.cwiseAbs().maxCoeff()));
}

TEST(Optimize, ZeroTargetNeedsNoIterations)
{
  const Problem s = MakeProblem(1, 4);
  ReducedProblem prob(s.cn, ZeroDesired(*s.ops, 4), 1e-4);
  OptimizerReport rep;
  const ControlTrajectory z = Optimize(prob, s.metric.Zero(), rep);
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(z.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Optimize, DescentAndFeasibility)
{
  const int N = 8;
  const Problem s = MakeProblem(1, N);
  for (const ControlBounds b : {ControlBounds{}, ControlBounds{-0.05, 0.05}})
  {
    ReducedProblem prob(s.cn, ControlStudyDesired(*s.ops, N, 1.0 / N), 1e-4, b);
    OptimizerReport rep;
    OptimizerOptions opt;
    opt.max_iters = 15;
    const ControlTrajectory z = Optimize(prob, s.metric.Zero(), rep, opt);
    EXPECT_TRUE(IsAdmissible(s.metric, z, b, 1e-10));
    ASSERT_GE(rep.trace.size(), 2u);
    for (std::size_t i = 1; i < rep.trace.size(); i++)
      EXPECT_LT(rep.trace[i].j, rep.trace[i - 1].j);
    EXPECT_LT(rep.trace.back().projected_grad_norm, rep.trace.front().projected_grad_norm);

    // variational inequality at the returned point, up to the stopping tolerance
    if (rep.converged)
    {
      const ControlTrajectory g = EvaluateGradient(prob, z);
      std::mt19937 rng(5);
      for (int k = 0; k < 4; k++)
      {
        ControlTrajectory q = fixtures::SmoothRandomControl(s.metric, rng, 0.01);
        ASSERT_TRUE(IsAdmissible(s.metric, q, b));
        EXPECT_GE(s.metric.Inner(g, q - z), -1e-5 * s.metric.Norm(q - z));
      }
    }
  }
}

TEST(Optimize, TraceCsv)
{
  OptimizerReport rep;
  rep.trace.push_back({0, 1.5, 0.2, 0.0, 0});
  std::ostringstream os;
  rep.WriteCsv(os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "iter,j_fd,projected_grad_norm,step_length,backtracks");
}

TEST(Optimize, RejectsNonPositiveAlpha)
{
  const Problem s = MakeProblem(1, 2);
  EXPECT_THROW(ReducedProblem(s.cn, ZeroDesired(*s.ops, 2), 0.0), std::invalid_argument);
}
