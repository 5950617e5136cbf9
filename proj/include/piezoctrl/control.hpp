// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_CONTROL_HPP
#define PIEZOCTRL_CONTROL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace piezoctrl
{

//
// Boundary control, constant on each boundary face and continuous piecewise linear in time.
// Column n of `values` holds z(t_n); column 0 is zero.
//
struct ControlTrajectory
{
  Eigen::MatrixXd values;  // faces x (N + 1)
  double dt = 0.0;

  ControlTrajectory() = default;
  ControlTrajectory(int faces, int steps, double dt_)
    : values(Eigen::MatrixXd::Zero(faces, steps + 1)), dt(dt_)
  {
  }

  int NumFaces() const { return static_cast<int>(values.rows()); }
  int Steps() const { return static_cast<int>(values.cols()) - 1; }
  double Time(int n) const { return n * dt; }
  Eigen::VectorXd At(int n) const { return values.col(n); }

  ControlTrajectory &operator+=(const ControlTrajectory &o)
  {
    values += o.values;
    return *this;
  }
  ControlTrajectory &operator-=(const ControlTrajectory &o)
  {
    values -= o.values;
    return *this;
  }
  ControlTrajectory &operator*=(double s)
  {
    values *= s;
    return *this;
  }
  friend ControlTrajectory operator+(ControlTrajectory a, const ControlTrajectory &b)
  {
    return a += b;
  }
  friend ControlTrajectory operator-(ControlTrajectory a, const ControlTrajectory &b)
  {
    return a -= b;
  }
  friend ControlTrajectory operator*(double s, ControlTrajectory a) { return a *= s; }
};

struct ControlBounds
{
  double lower = -1e6;
  double upper = 1e6;
};

//
// H^1-in-time metric on controls: [[g, y]] = sum_n sum_F |F| (g_n - g_{n-1})(y_n - y_{n-1}) / dt.
//
class ZMetric
{
public:
  ZMetric() = default;
  ZMetric(std::vector<double> face_areas, double dt, int steps)
    : areas_(Eigen::Map<const Eigen::VectorXd>(face_areas.data(),
                                               static_cast<int>(face_areas.size()))),
      dt_(dt), steps_(steps)
  {
    if (!(dt > 0.0) || steps < 1)
    {
      throw std::invalid_argument("ZMetric needs dt > 0 and at least one step");
    }
  }

  const Eigen::VectorXd &Areas() const { return areas_; }
  double TotalArea() const { return areas_.sum(); }
  double Dt() const { return dt_; }
  int Steps() const { return steps_; }
  int NumFaces() const { return static_cast<int>(areas_.size()); }

  ControlTrajectory Zero() const { return ControlTrajectory(NumFaces(), steps_, dt_); }

  void Check(const ControlTrajectory &z) const
  {
    if (z.NumFaces() != NumFaces() || z.Steps() != steps_ ||
        std::abs(z.dt - dt_) > 1e-14 * dt_)
    {
      throw std::invalid_argument("control grid does not match the metric");
    }
  }

  double Inner(const ControlTrajectory &g, const ControlTrajectory &y) const
  {
    Check(g);
    Check(y);
    double s = 0.0;
    for (int n = 1; n <= steps_; n++)
    {
      s += areas_.dot(((g.values.col(n) - g.values.col(n - 1)).array() *
                       (y.values.col(n) - y.values.col(n - 1)).array())
                          .matrix());
    }
    return s / dt_;
  }

  double Norm(const ControlTrajectory &z) const { return std::sqrt(Inner(z, z)); }

  // Area-weighted boundary integral of z_n.
  double Integral(const ControlTrajectory &z, int n) const { return areas_.dot(z.values.col(n)); }

  // Removes the area-weighted mean at every time step.
  void SubtractMean(ControlTrajectory &z) const
  {
    const double total = TotalArea();
    for (int n = 0; n <= z.Steps(); n++)
    {
      z.values.col(n).array() -= Integral(z, n) / total;
    }
  }

  // Sparse matrix of the metric over the unknowns z_1..z_N, index (n - 1) * F + f.
  Eigen::SparseMatrix<double> Matrix() const
  {
    const int nf = NumFaces();
    std::vector<Eigen::Triplet<double>> t;
    for (int n = 1; n <= steps_; n++)
    {
      for (int f = 0; f < nf; f++)
      {
        const int i = (n - 1) * nf + f;
        const double a = areas_[f] / dt_;
        t.emplace_back(i, i, n < steps_ ? 2.0 * a : a);
        if (n < steps_)
        {
          t.emplace_back(i, i + nf, -a);
          t.emplace_back(i + nf, i, -a);
        }
      }
    }
    Eigen::SparseMatrix<double> h(steps_ * nf, steps_ * nf);
    h.setFromTriplets(t.begin(), t.end());
    return h;
  }

private:
  Eigen::VectorXd areas_;
  double dt_ = 0.0;
  int steps_ = 0;
};

//
// Exact time integral of <beta(t), y(t)>_Gamma for beta and y continuous piecewise linear.
// `beta` holds face integrals: beta(F, n) = int_F beta_n.
//
inline double PairBeta(const Eigen::MatrixXd &beta, const ControlTrajectory &y)
{
  if (beta.rows() != y.NumFaces() || beta.cols() != y.values.cols())
  {
    throw std::invalid_argument("beta series does not match the control grid");
  }
  double s = 0.0;
  for (int n = 1; n <= y.Steps(); n++)
  {
    const auto b0 = beta.col(n - 1), b1 = beta.col(n);
    const auto y0 = y.values.col(n - 1), y1 = y.values.col(n);
    s += (2.0 * b0.dot(y0) + b0.dot(y1) + b1.dot(y0) + 2.0 * b1.dot(y1)) / 6.0;
  }
  return s * y.dt;
}

// Coefficients r with PairBeta(beta, y) = sum_{n >= 1} r.col(n) . y_n.
inline Eigen::MatrixXd PairBetaWeights(const Eigen::MatrixXd &beta, double dt)
{
  const int steps = static_cast<int>(beta.cols()) - 1;
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(beta.rows(), steps + 1);
  for (int n = 1; n < steps; n++)
  {
    r.col(n) = dt * (beta.col(n - 1) / 6.0 + 2.0 * beta.col(n) / 3.0 + beta.col(n + 1) / 6.0);
  }
  r.col(steps) = dt * (beta.col(steps - 1) / 6.0 + beta.col(steps) / 3.0);
  return r;
}

//
// Riesz representative in the zero-mean control space of y -> PairBeta(beta, y) + alpha [[z, y]].
// Solved face by face (the metric is diagonal in space and tridiagonal in time) without the
// mean constraint, then the per-step mean is removed.
//
inline ControlTrajectory RieszGradient(const ZMetric &metric, const Eigen::MatrixXd &beta,
                                       const ControlTrajectory &z, double alpha)
{
  metric.Check(z);
  const int steps = metric.Steps();
  const double dt = metric.Dt();
  const Eigen::MatrixXd rhs = PairBetaWeights(beta, dt);

  // Thomas factorization of tridiag(-1, 2, -1) with last diagonal 1 (size N).
  std::vector<double> cprime(steps), denom(steps);
  for (int i = 0; i < steps; i++)
  {
    const double diag = (i == steps - 1) ? 1.0 : 2.0;
    denom[i] = diag + (i > 0 ? cprime[i - 1] : 0.0);
    cprime[i] = (i < steps - 1) ? -1.0 / denom[i] : 0.0;
  }

  ControlTrajectory g = metric.Zero();
  std::vector<double> d(steps);
  for (int f = 0; f < metric.NumFaces(); f++)
  {
    const double scale = dt / metric.Areas()[f];
    for (int i = 0; i < steps; i++)
    {
      const double r = scale * rhs(f, i + 1);
      d[i] = (r - (i > 0 ? -d[i - 1] : 0.0)) / denom[i];
    }
    for (int i = steps - 1; i >= 0; i--)
    {
      const double x = d[i] - (i < steps - 1 ? cprime[i] * g.values(f, i + 2) : 0.0);
      g.values(f, i + 1) = x;
    }
  }
  g.values += alpha * z.values;
  metric.SubtractMean(g);
  return g;
}

struct ProjectionResult
{
  ControlTrajectory q;
  int iterations = 0;
  double kkt_residual = 0.0;
};

namespace detail
{

inline bool IsAdmissible(const ZMetric &metric, const ControlTrajectory &z, const ControlBounds &b,
                         double tol)
{
  if (z.values.col(0).cwiseAbs().maxCoeff() > tol)
  {
    return false;
  }
  for (int n = 1; n <= z.Steps(); n++)
  {
    if (z.values.col(n).minCoeff() < b.lower - tol || z.values.col(n).maxCoeff() > b.upper + tol)
    {
      return false;
    }
    if (std::abs(metric.Integral(z, n)) > tol * metric.TotalArea())
    {
      return false;
    }
  }
  return true;
}

}  // namespace detail

inline bool IsAdmissible(const ZMetric &metric, const ControlTrajectory &z, const ControlBounds &b,
                         double tol = 1e-12)
{
  metric.Check(z);
  return detail::IsAdmissible(metric, z, b, tol * std::max(1.0, z.values.cwiseAbs().maxCoeff()));
}

//
// Best approximation in the Z-metric onto {q : q_0 = 0, int_Gamma q_n = 0, lower <= q_n <= upper}.
// Primal active-set method over bound constraints; the equality-constrained subproblems are
// solved on the sparse KKT system. `warm` is used as starting point when admissible.
//
inline ProjectionResult ProjectQ(const ZMetric &metric, const ControlTrajectory &z_raw,
                                 const ControlBounds &bounds,
                                 const ControlTrajectory *warm = nullptr, int max_iters = 10000)
{
  metric.Check(z_raw);
  if (bounds.lower > 0.0 || bounds.upper < 0.0)
  {
    throw std::invalid_argument("infeasible control bounds: need lower <= 0 <= upper");
  }
  const int nf = metric.NumFaces();
  const int steps = metric.Steps();
  const int nv = nf * steps;
  const double lo = bounds.lower, hi = bounds.upper;

  auto flatten = [&](const ControlTrajectory &c)
  {
    Eigen::VectorXd v(nv);
    for (int n = 1; n <= steps; n++)
    {
      v.segment((n - 1) * nf, nf) = c.values.col(n);
    }
    return v;
  };
  auto unflatten = [&](const Eigen::VectorXd &v)
  {
    ControlTrajectory c = metric.Zero();
    for (int n = 1; n <= steps; n++)
    {
      c.values.col(n) = v.segment((n - 1) * nf, nf);
    }
    return c;
  };

  ProjectionResult res;
  const double zscale = std::max(1.0, z_raw.values.cwiseAbs().maxCoeff());
  ControlTrajectory z0 = z_raw;
  z0.values.col(0).setZero();
  if (detail::IsAdmissible(metric, z0, bounds, 1e-14 * zscale))
  {
    res.q = z0;
    return res;
  }

  const Eigen::SparseMatrix<double> h = metric.Matrix();
  const Eigen::VectorXd target = flatten(z0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(nv);
  if (warm && IsAdmissible(metric, *warm, bounds))
  {
    x = flatten(*warm);
  }
  const Eigen::VectorXd &area = metric.Areas();

  // 0 free, -1 at lower bound, +1 at upper bound (working set).
  std::vector<int> state(nv, 0);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(steps);

  auto solve_eqp = [&](const Eigen::VectorXd &grad, Eigen::VectorXd &p, Eigen::VectorXd &mult)
  {
    std::vector<int> free_map(nv, -1);
    int nfree = 0;
    for (int i = 0; i < nv; i++)
    {
      if (state[i] == 0)
      {
        free_map[i] = nfree++;
      }
    }
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(h.nonZeros() + 2 * nv);
    for (int c = 0; c < h.outerSize(); c++)
    {
      for (Eigen::SparseMatrix<double>::InnerIterator it(h, c); it; ++it)
      {
        const int i = free_map[it.row()], j = free_map[it.col()];
        if (i >= 0 && j >= 0)
        {
          t.emplace_back(i, j, it.value());
        }
      }
    }
    // Mean constraints, scaled by 1/dt to match the Hessian.
    const double cs = 1.0 / metric.Dt();
    for (int n = 0; n < steps; n++)
    {
      for (int f = 0; f < nf; f++)
      {
        const int i = free_map[n * nf + f];
        if (i >= 0)
        {
          t.emplace_back(nfree + n, i, cs * area[f]);
          t.emplace_back(i, nfree + n, cs * area[f]);
        }
      }
    }
    Eigen::SparseMatrix<double> kkt(nfree + steps, nfree + steps);
    kkt.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nfree + steps);
    for (int i = 0; i < nv; i++)
    {
      if (free_map[i] >= 0)
      {
        rhs[free_map[i]] = -grad[i];
      }
    }
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(kkt);
    if (lu.info() != Eigen::Success)
    {
      throw std::runtime_error("projection KKT system is singular");
    }
    const Eigen::VectorXd sol = lu.solve(rhs);
    p = Eigen::VectorXd::Zero(nv);
    for (int i = 0; i < nv; i++)
    {
      if (free_map[i] >= 0)
      {
        p[i] = sol[free_map[i]];
      }
    }
    mult = cs * sol.tail(steps);
  };

  const double htol = 1e-12 * zscale;
  Eigen::VectorXd p, mult;
  for (res.iterations = 0; res.iterations < max_iters; res.iterations++)
  {
    const Eigen::VectorXd grad = h * (x - target);
    solve_eqp(grad, p, mult);
    nu = mult;
    if (p.cwiseAbs().maxCoeff() <= htol)
    {
      // Bound multipliers r_i = grad_i + |F| nu_n; lower needs r >= 0, upper r <= 0.
      int worst = -1;
      double worst_val = 0.0;
      const double gscale = 1e-12 * std::max(1.0, grad.cwiseAbs().maxCoeff());
      for (int i = 0; i < nv; i++)
      {
        if (state[i] == 0)
        {
          continue;
        }
        const double r = grad[i] + area[i % nf] * nu[i / nf];
        const double viol = state[i] < 0 ? -r : r;
        if (viol > gscale && viol > worst_val)
        {
          worst = i;
          worst_val = viol;
        }
      }
      if (worst < 0)
      {
        break;
      }
      state[worst] = 0;
      continue;
    }
    double step = 1.0;
    int block = -1;
    for (int i = 0; i < nv; i++)
    {
      if (state[i] != 0)
      {
        continue;
      }
      if (p[i] < 0.0 && std::isfinite(lo))
      {
        const double s = (lo - x[i]) / p[i];
        if (s < step)
        {
          step = s;
          block = i;
        }
      }
      else if (p[i] > 0.0 && std::isfinite(hi))
      {
        const double s = (hi - x[i]) / p[i];
        if (s < step)
        {
          step = s;
          block = i;
        }
      }
    }
    step = std::max(step, 0.0);
    x += step * p;
    if (block >= 0)
    {
      state[block] = p[block] < 0.0 ? -1 : 1;
      x[block] = state[block] < 0 ? lo : hi;
    }
  }

  // KKT residual: stationarity, feasibility and multiplier signs.
  const Eigen::VectorXd grad = h * (x - target);
  double kkt = 0.0;
  for (int i = 0; i < nv; i++)
  {
    const double r = grad[i] + area[i % nf] * nu[i / nf];
    if (state[i] == 0)
    {
      kkt = std::max(kkt, std::abs(r));
    }
    else
    {
      kkt = std::max(kkt, std::max(0.0, state[i] < 0 ? -r : r));
    }
    kkt = std::max(kkt, std::max(0.0, lo - x[i]));
    kkt = std::max(kkt, std::max(0.0, x[i] - hi));
  }
  for (int n = 0; n < steps; n++)
  {
    kkt = std::max(kkt, std::abs(area.dot(x.segment(n * nf, nf))));
  }
  res.q = unflatten(x);
  res.kkt_residual = kkt;
  return res;
}

}  // namespace piezoctrl

#endif  // PIEZOCTRL_CONTROL_HPP
