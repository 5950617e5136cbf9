// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_MANUFACTURED_HPP
#define PIEZOCTRL_MANUFACTURED_HPP

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "piezoctrl/assembly.hpp"
#include "piezoctrl/materials.hpp"
#include "piezoctrl/timestepper.hpp"

namespace piezoctrl
{

// C^4 polynomial step: 0 for s <= 0, 1 for s >= 1.
struct SmoothStep
{
  static double P(double r, int d)
  {
    // 1 - 5r + 15r^2 - 35r^3 + 70r^4 - 126r^5 and its derivatives
    static constexpr double c[6] = {1.0, -5.0, 15.0, -35.0, 70.0, -126.0};
    double s = 0.0;
    for (int k = 5; k >= d; k--)
    {
      double coef = c[k];
      for (int m = 0; m < d; m++)
      {
        coef *= (k - m);
      }
      s = s * r + coef;
    }
    return s;
  }

  static double H(double s)
  {
    if (s <= 0.0)
    {
      return 0.0;
    }
    if (s >= 1.0)
    {
      return 1.0;
    }
    return std::pow(s, 5) * P(s - 1.0, 0);
  }

  static double dH(double s)
  {
    if (s <= 0.0 || s >= 1.0)
    {
      return 0.0;
    }
    const double r = s - 1.0;
    return 5.0 * std::pow(s, 4) * P(r, 0) + std::pow(s, 5) * P(r, 1);
  }

  static double d2H(double s)
  {
    if (s <= 0.0 || s >= 1.0)
    {
      return 0.0;
    }
    const double r = s - 1.0;
    return 20.0 * std::pow(s, 3) * P(r, 0) + 10.0 * std::pow(s, 4) * P(r, 1) +
           std::pow(s, 5) * P(r, 2);
  }
};

using Hessians = std::array<Matrix3, 3>;  // one per displacement component

//
// Exact displacement and potential with the derivatives needed to form strong-form data.
// grad_u row c is the gradient of component c.
//
struct ExactSolution
{
  std::function<Eigen::Vector3d(const Point &, double)> u, u_tt;
  std::function<Matrix3(const Point &, double)> grad_u;
  std::function<Hessians(const Point &, double)> hess_u;
  std::function<double(const Point &, double)> psi;
  std::function<Eigen::Vector3d(const Point &, double)> grad_psi;
  std::function<Matrix3(const Point &, double)> hess_psi;
};

// Separable fields u = a(t) U(x), psi = b(t) P(x).
struct SeparableParts
{
  std::function<double(double)> a, a_tt, b;
  std::function<Eigen::Vector3d(const Point &)> U;
  std::function<Matrix3(const Point &)> gradU;
  std::function<Hessians(const Point &)> hessU;
  std::function<double(const Point &)> P;
  std::function<Eigen::Vector3d(const Point &)> gradP;
  std::function<Matrix3(const Point &)> hessP;
};

inline ExactSolution MakeSeparable(SeparableParts s)
{
  ExactSolution e;
  e.u = [s](const Point &x, double t) { return (s.a(t) * s.U(x)).eval(); };
  e.u_tt = [s](const Point &x, double t) { return (s.a_tt(t) * s.U(x)).eval(); };
  e.grad_u = [s](const Point &x, double t) { return (s.a(t) * s.gradU(x)).eval(); };
  e.hess_u = [s](const Point &x, double t)
  {
    Hessians h = s.hessU(x);
    for (auto &m : h)
    {
      m *= s.a(t);
    }
    return h;
  };
  e.psi = [s](const Point &x, double t) { return s.b(t) * s.P(x); };
  e.grad_psi = [s](const Point &x, double t) { return (s.b(t) * s.gradP(x)).eval(); };
  e.hess_psi = [s](const Point &x, double t) { return (s.b(t) * s.hessP(x)).eval(); };
  return e;
}

// The verification case: u = H(2t - 2/5) U(x), psi = t^2 P(x) with zero-mean P.
inline ExactSolution SwitchOnManufactured()
{
  constexpr double pi = std::numbers::pi;
  SeparableParts s;
  s.a = [](double t) { return SmoothStep::H(2.0 * t - 0.4); };
  s.a_tt = [](double t) { return 4.0 * SmoothStep::d2H(2.0 * t - 0.4); };
  s.b = [](double t) { return t * t; };
  s.U = [](const Point &p)
  {
    const double x = p[0], y = p[1], z = p[2];
    return Eigen::Vector3d(std::cos(pi * x) * std::sin(pi * y) * std::cos(pi * z),
                           5 * x * x * y * z + 4 * x * y * y * z + 3 * x * y * z * z + 17,
                           std::cos(2 * x) * std::cos(3 * y) * std::cos(z));
  };
  s.gradU = [](const Point &p)
  {
    const double x = p[0], y = p[1], z = p[2];
    const double cx = std::cos(pi * x), sx = std::sin(pi * x);
    const double cy = std::cos(pi * y), sy = std::sin(pi * y);
    const double cz = std::cos(pi * z), sz = std::sin(pi * z);
    Matrix3 g;
    g.row(0) << -pi * sx * sy * cz, pi * cx * cy * cz, -pi * cx * sy * sz;
    g.row(1) << 10 * x * y * z + 4 * y * y * z + 3 * y * z * z,
        5 * x * x * z + 8 * x * y * z + 3 * x * z * z, 5 * x * x * y + 4 * x * y * y + 6 * x * y * z;
    const double c2 = std::cos(2 * x), s2 = std::sin(2 * x);
    const double c3 = std::cos(3 * y), s3 = std::sin(3 * y);
    const double c1 = std::cos(z), s1 = std::sin(z);
    g.row(2) << -2 * s2 * c3 * c1, -3 * c2 * s3 * c1, -c2 * c3 * s1;
    return g;
  };
  s.hessU = [](const Point &p)
  {
    const double x = p[0], y = p[1], z = p[2];
    const double cx = std::cos(pi * x), sx = std::sin(pi * x);
    const double cy = std::cos(pi * y), sy = std::sin(pi * y);
    const double cz = std::cos(pi * z), sz = std::sin(pi * z);
    const double pp = pi * pi;
    Hessians h;
    h[0] << -pp * cx * sy * cz, -pp * sx * cy * cz, pp * sx * sy * sz,  //
        -pp * sx * cy * cz, -pp * cx * sy * cz, -pp * cx * cy * sz,     //
        pp * sx * sy * sz, -pp * cx * cy * sz, -pp * cx * sy * cz;
    h[1] << 10 * y * z, 10 * x * z + 8 * y * z + 3 * z * z, 10 * x * y + 4 * y * y + 6 * y * z,  //
        10 * x * z + 8 * y * z + 3 * z * z, 8 * x * z, 5 * x * x + 8 * x * y + 6 * x * z,         //
        10 * x * y + 4 * y * y + 6 * y * z, 5 * x * x + 8 * x * y + 6 * x * z, 6 * x * y;
    const double c2 = std::cos(2 * x), s2 = std::sin(2 * x);
    const double c3 = std::cos(3 * y), s3 = std::sin(3 * y);
    const double c1 = std::cos(z), s1 = std::sin(z);
    h[2] << -4 * c2 * c3 * c1, 6 * s2 * s3 * c1, 2 * s2 * c3 * s1,  //
        6 * s2 * s3 * c1, -9 * c2 * c3 * c1, 3 * c2 * s3 * s1,      //
        2 * s2 * c3 * s1, 3 * c2 * s3 * s1, -c2 * c3 * c1;
    return h;
  };
  s.P = [](const Point &p)
  {
    const double x = p[0], y = p[1], z = p[2];
    return x * x * x + x * x * x * y - 3 * x * y * y * z - z * z * z / 3.0 - 1.0 / 24.0;
  };
  s.gradP = [](const Point &p)
  {
    const double x = p[0], y = p[1], z = p[2];
    return Eigen::Vector3d(3 * x * x + 3 * x * x * y - 3 * y * y * z, x * x * x - 6 * x * y * z,
                           -3 * x * y * y - z * z);
  };
  s.hessP = [](const Point &p)
  {
    const double x = p[0], y = p[1], z = p[2];
    Matrix3 h;
    h << 6 * x + 6 * x * y, 3 * x * x - 6 * y * z, -3 * y * y,  //
        3 * x * x - 6 * y * z, -6 * x * z, -6 * x * y,          //
        -3 * y * y, -6 * x * y, -2 * z;
    return h;
  };
  return MakeSeparable(std::move(s));
}

// Quadratic in space and in time; reproduced exactly by P2 and Crank-Nicolson when the
// coefficients are constant.
inline ExactSolution QuadraticCase()
{
  SeparableParts s;
  s.a = [](double t) { return t * t; };
  s.a_tt = [](double) { return 2.0; };
  s.b = [](double t) { return t * t; };
  s.U = [](const Point &p)
  {
    const double x = p[0], y = p[1], z = p[2];
    return Eigen::Vector3d(x * y + 0.5 * z * z, y * y - x * z + 1.0, x * x + 2.0 * y * z - y);
  };
  s.gradU = [](const Point &p)
  {
    const double x = p[0], y = p[1], z = p[2];
    Matrix3 g;
    g << y, x, z,  //
        -z, 2 * y, -x,  //
        2 * x, 2 * z - 1.0, 2 * y;
    return g;
  };
  s.hessU = [](const Point &)
  {
    Hessians h;
    h[0] << 0, 1, 0, 1, 0, 0, 0, 0, 1;
    h[1] << 0, 0, -1, 0, 2, 0, -1, 0, 0;
    h[2] << 2, 0, 0, 0, 0, 2, 0, 2, 0;
    return h;
  };
  // Zero mean on the unit cube.
  s.P = [](const Point &p) { return p[0] * p[1] - p[2] * p[2] + 1.0 / 12.0; };
  s.gradP = [](const Point &p) { return Eigen::Vector3d(p[1], p[0], -2.0 * p[2]); };
  s.hessP = [](const Point &)
  {
    Matrix3 h;
    h << 0, 1, 0, 1, 0, 0, 0, 0, -2;
    return h;
  };
  return MakeSeparable(std::move(s));
}

//
// Strong-form data making an exact solution satisfy
//   rho u'' = div(C eps(u) + E grad psi) + f,  0 = div(E^T eps(u) - kappa grad psi) + f_s,
//   (C eps(u) + E grad psi) n = g_N,  (E^T eps(u) - kappa grad psi) . n = z.
// Needs isotropic C with gradients and constant E, kappa.
//
struct ManufacturedData
{
  std::function<Eigen::Vector3d(const Point &, double)> body;
  std::function<double(const Point &, double)> charge;
  std::function<Eigen::Vector3d(const Point &, const Eigen::Vector3d &, double)> traction;
  std::function<double(const Point &, const Eigen::Vector3d &, double)> flux;
};

inline Matrix3 ManufacturedStress(const MaterialSet &mat, const ExactSolution &ex, const Point &x,
                                  double t)
{
  return mat.ApplyStiffness(x, ex.grad_u(x, t)) + mat.ApplyPiezo(x, ex.grad_psi(x, t));
}

inline Eigen::Vector3d ManufacturedFlux(const MaterialSet &mat, const ExactSolution &ex,
                                        const Point &x, double t)
{
  return mat.ApplyPiezoTranspose(x, ex.grad_u(x, t)) - mat.dielectric(x) * ex.grad_psi(x, t);
}

inline ManufacturedData MakeManufacturedData(const MaterialSet &mat, const ExactSolution &ex)
{
  if (!mat.isotropic || !mat.isotropic->grad_lambda || !mat.isotropic->grad_mu ||
      !mat.constant_piezo_dielectric)
  {
    throw std::invalid_argument(
        "manufactured data needs isotropic stiffness with gradients and constant E, kappa");
  }
  ManufacturedData d;
  d.body = [mat, ex](const Point &x, double t)
  {
    const IsotropicElasticity &iso = *mat.isotropic;
    const double lam = iso.lambda(x), mu = iso.mu(x);
    const Eigen::Vector3d glam = iso.grad_lambda(x), gmu = iso.grad_mu(x);
    const Matrix3 g = ex.grad_u(x, t);
    const Hessians h = ex.hess_u(x, t);
    const Matrix3 eps = 0.5 * (g + g.transpose());
    const double divu = g.trace();
    Eigen::Vector3d lap, grad_div;
    for (int i = 0; i < 3; i++)
    {
      lap[i] = h[i].trace();
      grad_div[i] = h[0](i, 0) + h[1](i, 1) + h[2](i, 2);
    }
    Eigen::Vector3d div_sigma =
        2.0 * eps * gmu + mu * (lap + grad_div) + divu * glam + lam * grad_div;
    // div(E grad psi): derivative j of E grad psi is E (column j of the Hessian).
    const Matrix3 hp = ex.hess_psi(x, t);
    for (int j = 0; j < 3; j++)
    {
      div_sigma += mat.ApplyPiezo(x, hp.col(j)).col(j);
    }
    return (mat.rho(x) * ex.u_tt(x, t) - div_sigma).eval();
  };
  d.charge = [mat, ex](const Point &x, double t)
  {
    const Hessians h = ex.hess_u(x, t);
    double div_d = 0.0;
    for (int j = 0; j < 3; j++)
    {
      Matrix3 gj;  // derivative j of grad u
      for (int c = 0; c < 3; c++)
      {
        gj.row(c) = h[c].row(j);
      }
      div_d += mat.ApplyPiezoTranspose(x, gj)[j];
    }
    div_d -= (mat.dielectric(x) * ex.hess_psi(x, t)).trace();
    return -div_d;
  };
  d.traction = [mat, ex](const Point &x, const Eigen::Vector3d &n, double t)
  { return (ManufacturedStress(mat, ex, x, t) * n).eval(); };
  d.flux = [mat, ex](const Point &x, const Eigen::Vector3d &n, double t)
  { return ManufacturedFlux(mat, ex, x, t).dot(n); };
  return d;
}

// Time-node forcing for the stepper: loads on V_h, W_h and interpolated Dirichlet values.
inline Forcing MakeManufacturedForcing(std::shared_ptr<const DiscreteOperators> ops,
                                       const ManufacturedData &data, const ExactSolution &ex,
                                       double dt)
{
  const int k = ops->scalar->Degree();
  const QuadratureRule tet = TetRule(DefaultQuadratureExactness(k));
  const QuadratureRule tri = TriangleRule(DefaultQuadratureExactness(k));
  Forcing f;
  f.mechanical = [ops, data, tet, tri, dt](int n)
  {
    const double t = n * dt;
    const ScalarSpace &s = *ops->scalar;
    const Mesh &mesh = s.GetMesh();
    Eigen::VectorXd full =
        VectorLoadFull(s, [&](const Point &x) { return data.body(x, t); }, tet);
    full += BoundaryVectorLoadFull(
        s, [&](const Point &x, const Eigen::Vector3d &nrm) { return data.traction(x, nrm, t); },
        [&](int face) { return !mesh.IsDirichletFace(face); }, tri);
    return ops->vector->Restrict(full);
  };
  f.electric = [ops, data, tet, tri, dt](int n)
  {
    const double t = n * dt;
    const ScalarSpace &s = *ops->scalar;
    Eigen::VectorXd e = -ScalarLoad(s, [&](const Point &x) { return data.charge(x, t); }, tet);
    e -= BoundaryScalarLoad(
        s, [&](const Point &x, const Eigen::Vector3d &nrm) { return data.flux(x, nrm, t); }, tri);
    return e;
  };
  f.dirichlet = [ops, ex, dt](int n)
  {
    const double t = n * dt;
    const VectorSpace &vs = *ops->vector;
    return vs.RestrictConstrained(vs.InterpolateFull([&](const Point &x) { return ex.u(x, t); }));
  };
  return f;
}

}  // namespace piezoctrl

#endif  // PIEZOCTRL_MANUFACTURED_HPP
