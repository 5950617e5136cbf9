// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_OPTIMIZER_HPP
#define PIEZOCTRL_OPTIMIZER_HPP

#include <chrono>
#include <cmath>
#include <deque>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "piezoctrl/control.hpp"
#include "piezoctrl/timestepper.hpp"

namespace piezoctrl
{

//
// Tracking problem: min (1/2) int ||u - u_d||_rho^2 + (alpha/2) [[z]]^2 over admissible z.
// desired[n] is the rho-weighted projection of u_d(t_n) on the free dofs.
//
struct ReducedProblem
{
  std::shared_ptr<const CrankNicolson> stepper;
  std::vector<Eigen::VectorXd> desired;
  double alpha = 1e-4;
  ControlBounds bounds;
  ZMetric metric;

  ReducedProblem() = default;
  ReducedProblem(std::shared_ptr<const CrankNicolson> cn, std::vector<Eigen::VectorXd> ud,
                 double alpha_, ControlBounds b = {})
    : stepper(std::move(cn)), desired(std::move(ud)), alpha(alpha_), bounds(b)
  {
    if (!(alpha > 0.0))
    {
      throw std::invalid_argument("alpha must be positive");
    }
    const int steps = static_cast<int>(desired.size()) - 1;
    metric = ZMetric(stepper->Ops().face_areas, stepper->Dt(), steps);
  }

  const DiscreteOperators &Ops() const { return stepper->Ops(); }
  int Steps() const { return metric.Steps(); }
};

// Simpson rule for int |e|_rho^2: (dt/6) sum (|e_{n-1}|^2 + 4 |e_{n-1/2}|^2 + |e_n|^2)_rho.
inline double MisfitIntegral(const DiscreteOperators &ops, const std::vector<Eigen::VectorXd> &e,
                             double dt)
{
  double s = 0.0;
  std::vector<double> sq(e.size());
  for (std::size_t n = 0; n < e.size(); n++)
  {
    sq[n] = e[n].dot(ops.mass * e[n]);
  }
  for (std::size_t n = 1; n < e.size(); n++)
  {
    const Eigen::VectorXd mid = 0.5 * (e[n - 1] + e[n]);
    s += sq[n - 1] + 4.0 * mid.dot(ops.mass * mid) + sq[n];
  }
  return s * dt / 6.0;
}

inline std::vector<Eigen::VectorXd> Misfit(const ReducedProblem &prob, const StateTrajectory &st)
{
  const VectorSpace &vs = *prob.Ops().vector;
  std::vector<Eigen::VectorXd> e(st.u.size());
  for (std::size_t n = 0; n < e.size(); n++)
  {
    e[n] = vs.Restrict(st.u[n]) - prob.desired[n];
  }
  return e;
}

inline double EvaluateJfd(const ReducedProblem &prob, const ControlTrajectory &z)
{
  prob.metric.Check(z);
  const StateTrajectory st = SolveState(*prob.stepper, z);
  const double dt = prob.metric.Dt();
  return 0.5 * MisfitIntegral(prob.Ops(), Misfit(prob, st), dt) +
         0.5 * prob.alpha * prob.metric.Inner(z, z);
}

struct Evaluation
{
  double value = 0.0;
  ControlTrajectory gradient;
};

inline Evaluation EvaluateWithGradient(const ReducedProblem &prob, const ControlTrajectory &z)
{
  prob.metric.Check(z);
  const StateTrajectory st = SolveState(*prob.stepper, z);
  const std::vector<Eigen::VectorXd> e = Misfit(prob, st);
  Evaluation ev;
  ev.value = 0.5 * MisfitIntegral(prob.Ops(), e, prob.metric.Dt()) +
             0.5 * prob.alpha * prob.metric.Inner(z, z);
  const AdjointTrajectory adj = SolveAdjoint(*prob.stepper, e);
  ev.gradient = RieszGradient(prob.metric, adj.beta, z, prob.alpha);
  return ev;
}

inline ControlTrajectory EvaluateGradient(const ReducedProblem &prob, const ControlTrajectory &z)
{
  return EvaluateWithGradient(prob, z).gradient;
}

struct IterationRecord
{
  int iter = 0;
  double j = 0.0;
  double projected_grad_norm = 0.0;
  double step_length = 0.0;
  int backtracks = 0;
};

struct OptimizerReport
{
  std::vector<IterationRecord> trace;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  double wall_seconds = 0.0;

  void WriteCsv(std::ostream &out) const
  {
    out << "iter,j_fd,projected_grad_norm,step_length,backtracks\n";
    out.precision(12);
    for (const auto &r : trace)
    {
      out << r.iter << ',' << r.j << ',' << r.projected_grad_norm << ',' << r.step_length << ','
          << r.backtracks << '\n';
    }
  }
};

struct OptimizerOptions
{
  double tol = 1e-6;
  int max_iters = 100;
  int memory = 10;
  double armijo_c1 = 1e-4;
  int max_backtracks = 30;
};

//
// Projected limited-memory BFGS with every inner product in the Z-metric. Indices within
// eps of an active bound (with the gradient pushing outward) are handled by steepest descent,
// the rest by the two-loop recursion.
//
inline ControlTrajectory Optimize(const ReducedProblem &prob, const ControlTrajectory &z_init,
                                  OptimizerReport &report, const OptimizerOptions &opt = {})
{
  const auto t0 = std::chrono::steady_clock::now();
  const ZMetric &metric = prob.metric;
  const ControlBounds &b = prob.bounds;
  report = OptimizerReport{};

  ControlTrajectory z = ProjectQ(metric, z_init, b).q;
  Evaluation ev = EvaluateWithGradient(prob, z);

  auto projected_step = [&](const ControlTrajectory &zz, const ControlTrajectory &g)
  {
    ControlTrajectory trial = zz - g;
    return ProjectQ(metric, trial, b, &zz).q;
  };

  std::deque<std::pair<ControlTrajectory, ControlTrajectory>> pairs;  // (s, y)
  std::deque<double> rho;
  ControlTrajectory warm = z;

  for (int it = 0;; it++)
  {
    const ControlTrajectory zq = projected_step(z, ev.gradient);
    const double pg = metric.Norm(z - zq);
    IterationRecord rec;
    rec.iter = it;
    rec.j = ev.value;
    rec.projected_grad_norm = pg;
    if (pg <= opt.tol)
    {
      report.trace.push_back(rec);
      report.converged = true;
      break;
    }
    if (it >= opt.max_iters)
    {
      report.trace.push_back(rec);
      break;
    }

    // Near-active set: at a bound within eps and gradient pointing out of the box.
    const double eps = std::min(1e-3, pg);
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> active =
        Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(z.NumFaces(), z.Steps() + 1,
                                                                     false);
    bool any_active = false;
    for (int n = 1; n <= z.Steps(); n++)
    {
      for (int f = 0; f < z.NumFaces(); f++)
      {
        const double x = z.values(f, n), g = ev.gradient.values(f, n);
        if ((x - b.lower <= eps && g > 0.0) || (b.upper - x <= eps && g < 0.0))
        {
          active(f, n) = true;
          any_active = true;
        }
      }
    }
    auto mask_inactive = [&](ControlTrajectory c)
    {
      if (any_active)
      {
        c.values = active.select(0.0, c.values);
      }
      return c;
    };

    ControlTrajectory q = mask_inactive(ev.gradient);
    std::vector<double> coef(pairs.size());
    for (int i = static_cast<int>(pairs.size()) - 1; i >= 0; i--)
    {
      coef[i] = rho[i] * metric.Inner(pairs[i].first, q);
      q.values -= coef[i] * pairs[i].second.values;
    }
    if (!pairs.empty())
    {
      const auto &[s, y] = pairs.back();
      q *= metric.Inner(s, y) / metric.Inner(y, y);
    }
    for (std::size_t i = 0; i < pairs.size(); i++)
    {
      const double beta = rho[i] * metric.Inner(pairs[i].second, q);
      q.values += (coef[i] - beta) * pairs[i].first.values;
    }
    ControlTrajectory d = mask_inactive(q);
    if (any_active)
    {
      d.values = active.select(ev.gradient.values, d.values);
    }
    metric.SubtractMean(d);
    if (!(metric.Inner(ev.gradient, d) > 0.0))
    {
      pairs.clear();
      rho.clear();
      d = ev.gradient;
    }

    double s = 1.0;
    int backtracks = 0;
    ControlTrajectory z_new;
    Evaluation ev_new;
    bool accepted = false;
    for (;;)
    {
      z_new = ProjectQ(metric, z - s * d, b, &warm).q;
      ev_new = EvaluateWithGradient(prob, z_new);
      const double decrease = metric.Inner(ev.gradient, z - z_new);
      if (ev_new.value < ev.value && ev_new.value <= ev.value - opt.armijo_c1 * decrease)
      {
        accepted = true;
        break;
      }
      if (backtracks >= opt.max_backtracks)
      {
        break;
      }
      s *= 0.5;
      backtracks++;
    }
    rec.step_length = s;
    rec.backtracks = backtracks;
    report.trace.push_back(rec);
    if (!accepted)
    {
      report.line_search_failed = true;
      break;
    }
    ControlTrajectory sk = z_new - z;
    ControlTrajectory yk = ev_new.gradient - ev.gradient;
    const double sy = metric.Inner(sk, yk);
    if (sy > 1e-14 * metric.Norm(sk) * metric.Norm(yk))
    {
      pairs.emplace_back(std::move(sk), std::move(yk));
      rho.push_back(1.0 / sy);
      if (static_cast<int>(pairs.size()) > opt.memory)
      {
        pairs.pop_front();
        rho.pop_front();
      }
    }
    z = z_new;
    warm = z;
    ev = std::move(ev_new);
    report.iterations = it + 1;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return z;
}

}  // namespace piezoctrl

#endif  // PIEZOCTRL_OPTIMIZER_HPP
