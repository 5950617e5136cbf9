// SPDX-License-Identifier: Apache-2.0
// Independent dense oracles for the single-element assembly checks: P1/P2 basis functions
// written out as barycentric polynomials and integrated with the closed-form simplex
// moment formula, no quadrature involved.

#ifndef PIEZOCTRL_ORACLES_HPP
#define PIEZOCTRL_ORACLES_HPP

#include <array>
#include <limits>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "piezoctrl/assembly.hpp"
#include "piezoctrl/control.hpp"

namespace piezoctrl::oracle
{

using Exps = std::array<int, 4>;
using BaryPoly = std::map<Exps, double>;

inline BaryPoly Mul(const BaryPoly &a, const BaryPoly &b)
{
  BaryPoly r;
  for (const auto &[ea, ca] : a)
    for (const auto &[eb, cb] : b)
    {
      Exps e;
      for (int i = 0; i < 4; i++)
        e[i] = ea[i] + eb[i];
      r[e] += ca * cb;
    }
  return r;
}

inline BaryPoly Deriv(const BaryPoly &a, int j)
{
  BaryPoly r;
  for (const auto &[e, c] : a)
    if (e[j] > 0)
    {
      Exps f = e;
      f[j]--;
      r[f] += c * e[j];
    }
  return r;
}

inline double Factorial(int n)
{
  double f = 1;
  for (int i = 2; i <= n; i++)
    f *= i;
  return f;
}

// int_K prod lambda_i^a_i = (prod a_i!) 3! |K| / (|a| + 3)!
inline double IntegrateTet(const BaryPoly &p, double volume)
{
  double s = 0;
  for (const auto &[e, c] : p)
  {
    const int sum = e[0] + e[1] + e[2] + e[3];
    s += c * Factorial(e[0]) * Factorial(e[1]) * Factorial(e[2]) * Factorial(e[3]) * 6.0 *
         volume / Factorial(sum + 3);
  }
  return s;
}

// int over the face opposite `opp` (lambda_opp = 0): (prod a_i!) 2! |F| / (|a| + 2)!
inline double IntegrateFace(const BaryPoly &p, int opp, double area)
{
  double s = 0;
  for (const auto &[e, c] : p)
  {
    if (e[opp] > 0)
      continue;
    const int sum = e[0] + e[1] + e[2] + e[3];
    s += c * Factorial(e[0]) * Factorial(e[1]) * Factorial(e[2]) * Factorial(e[3]) * 2.0 * area /
         Factorial(sum + 2);
  }
  return s;
}

struct OracleBasis
{
  std::vector<BaryPoly> phi;
  std::vector<Eigen::Vector4d> node_bary;
};

// P1: lambda_i.  P2: lambda_i (2 lambda_i - 1) and 4 lambda_i lambda_j.
inline OracleBasis MakeOracleBasis(int k)
{
  OracleBasis b;
  auto unit = [](int i, int p) { Exps e{0, 0, 0, 0}; e[i] = p; return e; };
  for (int i = 0; i < 4; i++)
  {
    Eigen::Vector4d l = Eigen::Vector4d::Zero();
    l[i] = 1;
    b.node_bary.push_back(l);
    if (k == 1)
      b.phi.push_back({{unit(i, 1), 1.0}});
    else
      b.phi.push_back({{unit(i, 2), 2.0}, {unit(i, 1), -1.0}});
  }
  if (k == 2)
    for (int i = 0; i < 4; i++)
      for (int j = i + 1; j < 4; j++)
      {
        Exps e{0, 0, 0, 0};
        e[i] = e[j] = 1;
        b.phi.push_back({{e, 4.0}});
        Eigen::Vector4d l = Eigen::Vector4d::Zero();
        l[i] = l[j] = 0.5;
        b.node_bary.push_back(l);
      }
  return b;
}

inline Mesh SingleTetMesh(const std::array<Point, 4> &x)
{
  std::vector<Point> v(x.begin(), x.end());
  std::vector<BoundaryFace> faces;
  for (auto f : std::vector<std::array<int, 3>>{{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}})
  {
    BoundaryFace bf;
    bf.vertices = f;
    bf.tag = 0;
    faces.push_back(bf);
  }
  return Mesh(v, {{0, 1, 2, 3}}, faces, {});
}

struct DenseBlocks
{
  Eigen::MatrixXd mass, kuu, kupsi, kpsiu, kpsipsi, control;
  Eigen::VectorXd grounding;
};

// Dense blocks in the ordering of `space` (dofs matched by coordinates), constant coefficients.
inline DenseBlocks OracleBlocks(const ScalarSpace &space, double rho, const Stiffness6 &c,
                                const Piezo63 &e, const Matrix3 &kappa)
{
  const Mesh &mesh = space.GetMesh();
  const int k = space.Degree();
  const OracleBasis ob = MakeOracleBasis(k);
  const int n = static_cast<int>(ob.phi.size());
  const auto &tv = mesh.Tets()[0];
  Eigen::Matrix4d xs = Eigen::Matrix4d::Ones();
  for (int j = 0; j < 4; j++)
    xs.block<3, 1>(0, j) = mesh.Vertices()[tv[j]];
  // rows of inverse give barycentric coordinate gradients
  const Eigen::Matrix4d inv = xs.inverse();
  Eigen::Matrix<double, 4, 3> gl = inv.leftCols<3>();
  const double vol = std::abs(xs.determinant()) / 6.0;

  // map oracle nodes to space dofs by coordinates
  std::vector<int> map(n, -1);
  for (int i = 0; i < n; i++)
  {
    Point p = Point::Zero();
    for (int j = 0; j < 4; j++)
      p += ob.node_bary[i][j] * mesh.Vertices()[tv[j]];
    for (int d = 0; d < space.Size(); d++)
      if ((space.DofCoord(d) - p).norm() < 1e-12)
        map[i] = d;
  }

  // gradient of phi_i = sum_j dphi/dlambda_j grad lambda_j; integrals of products
  auto grad_pair = [&](int a, int b) {
    Eigen::Matrix3d g = Eigen::Matrix3d::Zero();  // int grad phi_a grad phi_b^T
    for (int j = 0; j < 4; j++)
      for (int l = 0; l < 4; l++)
      {
        const double s = IntegrateTet(Mul(Deriv(ob.phi[a], j), Deriv(ob.phi[b], l)), vol);
        g += s * gl.row(j).transpose() * gl.row(l);
      }
    return g;
  };

  auto strain = [](const Eigen::Vector3d &g, int comp) {
    Matrix3 m = Matrix3::Zero();
    m.row(comp) = g.transpose();
    return VoigtStrain(m);
  };

  DenseBlocks d;
  const int ns = space.Size();
  d.mass = Eigen::MatrixXd::Zero(3 * ns, 3 * ns);
  d.kuu = Eigen::MatrixXd::Zero(3 * ns, 3 * ns);
  d.kupsi = Eigen::MatrixXd::Zero(3 * ns, ns);
  d.kpsiu = Eigen::MatrixXd::Zero(ns, 3 * ns);
  d.kpsipsi = Eigen::MatrixXd::Zero(ns, ns);
  d.grounding = Eigen::VectorXd::Zero(ns);
  d.control = Eigen::MatrixXd::Zero(ns, mesh.NumFaces());
  for (int a = 0; a < n; a++)
  {
    d.grounding[map[a]] = IntegrateTet(ob.phi[a], vol);
    for (int b = 0; b < n; b++)
    {
      const double m = rho * IntegrateTet(Mul(ob.phi[a], ob.phi[b]), vol);
      const Matrix3 gg = grad_pair(a, b);  // int grad a grad b^T
      d.kpsipsi(map[a], map[b]) = (gg.array() * kappa.array()).sum();
      // bilinear in gradients: int f(grad a, grad b) = sum_{pq} gg(p,q) f(e_p, e_q)
      for (int ca = 0; ca < 3; ca++)
      {
        d.mass(3 * map[a] + ca, 3 * map[b] + ca) = m;
        double kup = 0, kpu = 0;
        for (int p = 0; p < 3; p++)
          for (int q = 0; q < 3; q++)
          {
            const Eigen::Vector3d ep = Eigen::Vector3d::Unit(p), eq = Eigen::Vector3d::Unit(q);
            // (E grad psi_b, eps(w_a)) and (E^T eps(u_b), grad phi_a)
            kup += gg(p, q) * strain(ep, ca).dot(e * eq);
            kpu += gg(p, q) * ep.dot(e.transpose() * strain(eq, ca));
          }
        d.kupsi(3 * map[a] + ca, map[b]) = kup;
        d.kpsiu(map[a], 3 * map[b] + ca) = kpu;
        for (int cb = 0; cb < 3; cb++)
        {
          double s = 0;
          for (int p = 0; p < 3; p++)
            for (int q = 0; q < 3; q++)
            {
              const Eigen::Vector3d ep = Eigen::Vector3d::Unit(p), eq = Eigen::Vector3d::Unit(q);
              s += gg(p, q) * strain(ep, ca).dot(c * strain(eq, cb));
            }
          d.kuu(3 * map[a] + ca, 3 * map[b] + cb) = s;
        }
      }
    }
    for (int f = 0; f < mesh.NumFaces(); f++)
    {
      const auto &face = mesh.Faces()[f];
      d.control(map[a], f) = IntegrateFace(ob.phi[a], face.opposite, BoundaryFaceArea(mesh, f));
    }
  }
  return d;
}

// Enumerates all lower/free/upper patterns; each equality-constrained QP solved densely.
inline ControlTrajectory BruteForceProjection(const ZMetric &m, const ControlTrajectory &z, double lo,
                                       double hi)
{
  const int nf = m.NumFaces(), N = m.Steps(), nv = nf * N;
  const Eigen::MatrixXd h(m.Matrix());
  Eigen::VectorXd zf(nv);
  for (int n = 1; n <= N; n++)
    zf.segment((n - 1) * nf, nf) = z.values.col(n);
  int total = 1;
  for (int i = 0; i < nv; i++)
    total *= 3;
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  for (int code = 0; code < total; code++)
  {
    std::vector<int> pat(nv);
    int c = code;
    for (int i = 0; i < nv; i++)
    {
      pat[i] = c % 3 - 1;
      c /= 3;
    }
    std::vector<int> fr;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(nv);
    for (int i = 0; i < nv; i++)
    {
      if (pat[i] == 0)
        fr.push_back(i);
      else
        x[i] = pat[i] < 0 ? lo : hi;
    }
    const int k = static_cast<int>(fr.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + N, k + N);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + N);
    const Eigen::VectorXd hz = h * (zf - x);  // gradient terms from fixed part
    for (int a = 0; a < k; a++)
    {
      for (int b = 0; b < k; b++)
        kkt(a, b) = h(fr[a], fr[b]);
      rhs[a] = hz[fr[a]];
      const int n = fr[a] / nf;
      kkt(a, k + n) = kkt(k + n, a) = m.Areas()[fr[a] % nf];
    }
    for (int n = 0; n < N; n++)
    {
      double fixed = 0;
      for (int f = 0; f < nf; f++)
        fixed += m.Areas()[f] * x[n * nf + f];
      rhs[k + n] = -fixed;
    }
    // rows of steps without free variables are empty; regularize them away
    for (int n = 0; n < N; n++)
      if (kkt.row(k + n).isZero())
        kkt(k + n, k + n) = 1.0;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    if ((kkt * sol - rhs).norm() > 1e-10 * (1 + rhs.norm()))
      continue;
    for (int a = 0; a < k; a++)
      x[fr[a]] = sol[a];
    bool ok = true;
    for (int i = 0; i < nv; i++)
      ok = ok && x[i] >= lo - 1e-12 && x[i] <= hi + 1e-12;
    for (int n = 0; n < N; n++)
      ok = ok && std::abs(m.Areas().dot(x.segment(n * nf, nf))) < 1e-11;
    if (!ok)
      continue;
    const double obj = (x - zf).dot(h * (x - zf));
    if (obj < best)
    {
      best = obj;
      best_x = x;
    }
  }
  ControlTrajectory q = m.Zero();
  for (int n = 1; n <= N; n++)
    q.values.col(n) = best_x.segment((n - 1) * nf, nf);
  return q;
}

}  // namespace piezoctrl::oracle

#endif  // PIEZOCTRL_ORACLES_HPP
