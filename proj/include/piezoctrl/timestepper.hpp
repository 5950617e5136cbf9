// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_TIMESTEPPER_HPP
#define PIEZOCTRL_TIMESTEPPER_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "piezoctrl/assembly.hpp"
#include "piezoctrl/control.hpp"

namespace piezoctrl
{

class SolverError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//
// Data of the semidiscrete system at the time nodes. Any member may be empty (zero data).
//   mechanical(n): load on free displacement dofs, (f, w) + <g_N, w>
//   electric(n):   right-hand side e of  -(E^T eps(u), grad phi) + (kappa grad psi, grad phi) = e
//   dirichlet(n):  values at constrained displacement dofs
//
struct Forcing
{
  std::function<Eigen::VectorXd(int)> mechanical;
  std::function<Eigen::VectorXd(int)> electric;
  std::function<Eigen::VectorXd(int)> dirichlet;
};

// Full-length (constrained dofs included) displacement and velocity series; psi is grounded.
struct StateTrajectory
{
  double dt = 0.0;
  std::vector<Eigen::VectorXd> u, v, psi;

  int Steps() const { return static_cast<int>(u.size()) - 1; }
};

struct AdjointTrajectory
{
  double dt = 0.0;
  std::vector<Eigen::VectorXd> p, q, xi;  // p, q on free dofs
  Eigen::MatrixXd beta;                   // faces x (N + 1): beta(F, n) = int_F xi_n

  int Steps() const { return static_cast<int>(p.size()) - 1; }
};

//
// Crank-Nicolson on the first-order form M u' = M v, M v' = -K u - K_upsi psi + F, with the
// potential tied to u at every node by the elliptic relation. Unknowns per step are
// (u_n free, psi_n, lambda); the second row is negated so that the step matrix is symmetric
// when the coupling blocks are transposes of each other. Factored once.
//
class CrankNicolson
{
public:
  CrankNicolson(std::shared_ptr<const DiscreteOperators> ops, double dt)
    : ops_(std::move(ops)), dt_(dt)
  {
    if (!(dt > 0.0))
    {
      throw std::invalid_argument("time step must be positive");
    }
    const DiscreteOperators &o = *ops_;
    nu_ = o.NumU();
    np_ = o.NumPsi();
    const double a = 4.0 / (dt * dt);
    Triplets t;
    t.reserve(o.mass.nonZeros() + o.k_uu.nonZeros() + 2 * o.k_upsi.nonZeros() +
              o.k_psipsi.nonZeros() + 2 * np_);
    AddBlock(t, o.mass, 0, 0, a);
    AddBlock(t, o.k_uu, 0, 0, 1.0);
    AddBlock(t, o.k_upsi, 0, nu_, 1.0);
    AddBlock(t, o.k_psiu, nu_, 0, 1.0);
    AddBlock(t, o.k_psipsi, nu_, nu_, -1.0);
    for (int i = 0; i < np_; i++)
    {
      t.emplace_back(nu_ + i, nu_ + np_, -o.grounding[i]);
      t.emplace_back(nu_ + np_, nu_ + i, -o.grounding[i]);
    }
    SparseMatrix step(nu_ + np_ + 1, nu_ + np_ + 1);
    step.setFromTriplets(t.begin(), t.end());
    step.makeCompressed();
    step_lu_.analyzePattern(step);
    step_lu_.factorize(step);
    if (step_lu_.info() != Eigen::Success)
    {
      throw SolverError("singular time-step matrix");
    }

    Triplets te;
    AddBlock(te, o.k_psipsi, 0, 0, 1.0);
    for (int i = 0; i < np_; i++)
    {
      te.emplace_back(i, np_, o.grounding[i]);
      te.emplace_back(np_, i, o.grounding[i]);
    }
    SparseMatrix ell(np_ + 1, np_ + 1);
    ell.setFromTriplets(te.begin(), te.end());
    ell.makeCompressed();
    elliptic_lu_.analyzePattern(ell);
    elliptic_lu_.factorize(ell);
    if (elliptic_lu_.info() != Eigen::Success)
    {
      throw SolverError("singular potential system");
    }
  }

  const DiscreteOperators &Ops() const { return *ops_; }
  std::shared_ptr<const DiscreteOperators> OpsPtr() const { return ops_; }
  double Dt() const { return dt_; }

  // Potential at a node from the full displacement: (kappa grad psi, grad phi) =
  // e + (E^T eps(u), grad phi), grounded.
  Eigen::VectorXd Potential(const Eigen::VectorXd &u_full, const Eigen::VectorXd &e) const
  {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(np_ + 1);
    rhs.head(np_) = ops_->k_psiu_full * u_full;
    if (e.size() > 0)
    {
      rhs.head(np_) += e;
    }
    const Eigen::VectorXd sol = elliptic_lu_.solve(rhs);
    Eigen::VectorXd psi = sol.head(np_);
    CheckGrounded(psi);
    return psi;
  }

  // Runs N steps from (u0, v0) given as full vectors; empty means zero.
  StateTrajectory Run(int steps, const Forcing &forcing, const Eigen::VectorXd &u0 = {},
                      const Eigen::VectorXd &v0 = {}) const
  {
    if (steps < 1)
    {
      throw std::invalid_argument("need at least one time step");
    }
    const DiscreteOperators &o = *ops_;
    const VectorSpace &vs = *o.vector;
    const int nfull = vs.FullSize();
    const double a = 4.0 / (dt_ * dt_);

    auto dirichlet_full = [&](int n)
    {
      if (!forcing.dirichlet)
      {
        return Eigen::VectorXd(Eigen::VectorXd::Zero(nfull));
      }
      return vs.Extend(Eigen::VectorXd::Zero(vs.Size()), forcing.dirichlet(n));
    };
    auto mech = [&](int n)
    {
      return forcing.mechanical ? forcing.mechanical(n)
                                : Eigen::VectorXd(Eigen::VectorXd::Zero(nu_));
    };
    auto elec = [&](int n)
    {
      return forcing.electric ? forcing.electric(n) : Eigen::VectorXd(Eigen::VectorXd::Zero(np_));
    };

    StateTrajectory tr;
    tr.dt = dt_;
    tr.u.reserve(steps + 1);
    tr.v.reserve(steps + 1);
    tr.psi.reserve(steps + 1);
    Eigen::VectorXd u = u0.size() ? u0 : Eigen::VectorXd(Eigen::VectorXd::Zero(nfull));
    Eigen::VectorXd v = v0.size() ? v0 : Eigen::VectorXd(Eigen::VectorXd::Zero(nfull));
    if (forcing.dirichlet)
    {
      const Eigen::VectorXd ud = dirichlet_full(0);
      for (int c : vs.ConstrainedDofs())
      {
        u[c] = ud[c];
      }
    }
    Eigen::VectorXd psi = Potential(u, elec(0));
    tr.u.push_back(u);
    tr.v.push_back(v);
    tr.psi.push_back(psi);

    Eigen::VectorXd f_prev = mech(0);
    Eigen::VectorXd rhs(nu_ + np_ + 1);
    for (int n = 1; n <= steps; n++)
    {
      const Eigen::VectorXd f_cur = mech(n);
      const Eigen::VectorXd e_cur = elec(n);
      Eigen::VectorXd full = a * (o.mass_full * u) + (4.0 / dt_) * (o.mass_full * v) -
                             o.k_uu_full * u;
      Eigen::VectorXd psi_rhs = -e_cur;
      Eigen::VectorXd ud;
      if (forcing.dirichlet)
      {
        ud = dirichlet_full(n);
        full -= a * (o.mass_full * ud) + o.k_uu_full * ud;
        psi_rhs -= o.k_psiu_full * ud;
      }
      rhs.head(nu_) = vs.Restrict(full) - o.k_upsi * psi + f_cur + f_prev;
      rhs.segment(nu_, np_) = psi_rhs;
      rhs[nu_ + np_] = 0.0;
      const Eigen::VectorXd sol = step_lu_.solve(rhs);
      if (!sol.allFinite())
      {
        throw SolverError("time step produced non-finite values");
      }
      Eigen::VectorXd u_new = vs.Extend(sol.head(nu_));
      if (forcing.dirichlet)
      {
        for (int c : vs.ConstrainedDofs())
        {
          u_new[c] = ud[c];
        }
      }
      v = (2.0 / dt_) * (u_new - u) - v;
      u = std::move(u_new);
      psi = sol.segment(nu_, np_);
      CheckGrounded(psi);
      tr.u.push_back(u);
      tr.v.push_back(v);
      tr.psi.push_back(psi);
      f_prev = f_cur;
    }
    return tr;
  }

private:
  std::shared_ptr<const DiscreteOperators> ops_;
  double dt_;
  int nu_ = 0, np_ = 0;
  Eigen::SparseLU<SparseMatrix> step_lu_, elliptic_lu_;

  static void AddBlock(Triplets &t, const SparseMatrix &m, int r0, int c0, double s)
  {
    for (int c = 0; c < m.outerSize(); c++)
    {
      for (SparseMatrix::InnerIterator it(m, c); it; ++it)
      {
        t.emplace_back(r0 + it.row(), c0 + it.col(), s * it.value());
      }
    }
  }

  void CheckGrounded(const Eigen::VectorXd &psi) const
  {
    const double r = std::abs(ops_->grounding.dot(psi));
    const double scale = ops_->grounding.cwiseAbs().sum() * psi.cwiseAbs().maxCoeff();
    if (r > 1e-10 * std::max(scale, 1e-300) && r > 1e-14)
    {
      throw SolverError("potential solve violates the grounding condition");
    }
  }
};

// Control enters the potential equation as -<z, phi>_Gamma.
inline Eigen::VectorXd ControlLoad(const DiscreteOperators &ops, const ControlTrajectory &z, int n)
{
  return -(ops.control * z.values.col(n));
}

// State for control z plus optional extra forcing (sources of a manufactured case).
inline StateTrajectory SolveState(const CrankNicolson &cn, const ControlTrajectory &z,
                                  const Forcing &sources = {})
{
  const DiscreteOperators &ops = cn.Ops();
  if (z.NumFaces() != ops.NumFaces())
  {
    throw std::invalid_argument("control has the wrong number of faces");
  }
  if (std::abs(z.dt - cn.Dt()) > 1e-14 * cn.Dt())
  {
    throw std::invalid_argument("control time grid does not match the stepper");
  }
  Forcing f = sources;
  f.electric = [&, extra = sources.electric](int n)
  {
    Eigen::VectorXd e = ControlLoad(ops, z, n);
    if (extra)
    {
      e += extra(n);
    }
    return e;
  };
  return cn.Run(z.Steps(), f);
}

//
// Adjoint for a misfit series f_n (free displacement dofs, n = 0..N): the same scheme run on
// the reversed time axis with mechanical load M f_{N-m} and no electric load. beta holds the
// face integrals of the potential trace.
//
inline AdjointTrajectory SolveAdjoint(const CrankNicolson &cn,
                                      const std::vector<Eigen::VectorXd> &misfit)
{
  const DiscreteOperators &ops = cn.Ops();
  const int steps = static_cast<int>(misfit.size()) - 1;
  if (steps < 1)
  {
    throw std::invalid_argument("misfit series needs at least two nodes");
  }
  Forcing f;
  f.mechanical = [&](int m) { return Eigen::VectorXd(ops.mass * misfit[steps - m]); };
  const StateTrajectory rev = cn.Run(steps, f);

  AdjointTrajectory adj;
  adj.dt = cn.Dt();
  adj.p.resize(steps + 1);
  adj.q.resize(steps + 1);
  adj.xi.resize(steps + 1);
  adj.beta.resize(ops.NumFaces(), steps + 1);
  const VectorSpace &vs = *ops.vector;
  for (int n = 0; n <= steps; n++)
  {
    const int m = steps - n;
    adj.p[n] = vs.Restrict(rev.u[m]);
    adj.q[n] = -vs.Restrict(rev.v[m]);
    adj.xi[n] = rev.psi[m];
    adj.beta.col(n) = ops.control.transpose() * rev.psi[m];
  }
  return adj;
}

// Energy 1/2 v'Mv + 1/2 u'K u + 1/2 psi'K_psipsi psi (free dofs).
inline double Energy(const DiscreteOperators &ops, const Eigen::VectorXd &u_free,
                     const Eigen::VectorXd &v_free, const Eigen::VectorXd &psi)
{
  return 0.5 * v_free.dot(ops.mass * v_free) + 0.5 * u_free.dot(ops.k_uu * u_free) +
         0.5 * psi.dot(ops.k_psipsi * psi);
}

inline double Energy(const DiscreteOperators &ops, const StateTrajectory &tr, int n)
{
  const VectorSpace &vs = *ops.vector;
  return Energy(ops, vs.Restrict(tr.u[n]), vs.Restrict(tr.v[n]), tr.psi[n]);
}

}  // namespace piezoctrl

#endif  // PIEZOCTRL_TIMESTEPPER_HPP
