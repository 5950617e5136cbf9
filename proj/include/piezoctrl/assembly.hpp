// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_ASSEMBLY_HPP
#define PIEZOCTRL_ASSEMBLY_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "piezoctrl/fespace.hpp"
#include "piezoctrl/materials.hpp"
#include "piezoctrl/quadrature.hpp"

namespace piezoctrl
{

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

//
// Values and physical gradients of every local basis function at one quadrature point.
//
struct BasisAtPoint
{
  Eigen::VectorXd values;
  Eigen::MatrixXd grads;  // n x 3
  Point x;
  double weight = 0.0;  // physical quadrature weight
};

inline void EvalBasis(const LagrangeTet &basis, const TetGeometry &geo,
                      const Eigen::Vector3d &xi, double ref_weight, BasisAtPoint &out)
{
  Eigen::MatrixXd dbary;
  basis.EvalWithBaryDerivs(BaryFromRef(xi), out.values, dbary);
  out.grads = dbary * geo.grad_bary;
  out.x = geo.Map(xi);
  out.weight = ref_weight * geo.det;
}

// Voigt strain of the vector basis function phi e_c, given grad phi.
inline Voigt6 BasisStrain(const Eigen::Vector3d &g, int c)
{
  Voigt6 b = Voigt6::Zero();
  switch (c)
  {
    case 0:
      b << g[0], 0, 0, 0, g[2], g[1];
      break;
    case 1:
      b << 0, g[1], 0, g[2], 0, g[0];
      break;
    default:
      b << 0, 0, g[2], g[1], g[0], 0;
      break;
  }
  return b;
}

//
// Assembled blocks of the semidiscrete state system. u-blocks act on free (Dirichlet
// eliminated) displacement dofs; the *_full variants keep every displacement dof and are
// used to lift inhomogeneous Dirichlet data.
//
//   mass       (rho u, w)
//   k_uu       (C eps(u), eps(w))
//   k_upsi     (E grad psi, eps(w))          rows: w, cols: psi
//   k_psiu     (E^T eps(u), grad phi)         rows: phi, cols: u; equals k_upsi^T
//   k_psipsi   (kappa grad psi, grad phi)
//   control    B[phi, F] = int_F phi
//   grounding  g[phi] = int_Omega phi
//
struct DiscreteOperators
{
  std::shared_ptr<const ScalarSpace> scalar;
  std::shared_ptr<const VectorSpace> vector;
  SparseMatrix mass, k_uu, k_upsi, k_psiu, k_psipsi, control;
  SparseMatrix mass_full, k_uu_full, k_upsi_full, k_psiu_full;
  Eigen::VectorXd grounding;
  std::vector<double> face_areas;

  int NumU() const { return vector->Size(); }
  int NumPsi() const { return scalar->Size(); }
  int NumFaces() const { return static_cast<int>(face_areas.size()); }
};

namespace detail
{

// Selection matrix picking the given full indices as rows.
inline SparseMatrix Selector(const std::vector<int> &rows, int ncols)
{
  SparseMatrix p(static_cast<int>(rows.size()), ncols);
  Triplets t;
  t.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); i++)
  {
    t.emplace_back(static_cast<int>(i), rows[i], 1.0);
  }
  p.setFromTriplets(t.begin(), t.end());
  return p;
}

}  // namespace detail

inline int DefaultQuadratureExactness(int degree) { return 2 * degree + 2; }

inline DiscreteOperators Assemble(std::shared_ptr<const VectorSpace> vspace,
                                  const MaterialSet &mat, const QuadratureRule &quad)
{
  const ScalarSpace &space = vspace->Scalar();
  const int k = space.Degree();
  if (quad.exactness < 2 * k + 2)
  {
    throw std::invalid_argument("quadrature exactness must be at least 2k+2");
  }
  const Mesh &mesh = space.GetMesh();
  const int nloc = space.Basis().NumNodes();
  const int ns = space.Size();
  const int nu = 3 * ns;

  Triplets tm, tk, tup, tpu, tpp;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(ns);
  const std::size_t est = static_cast<std::size_t>(mesh.NumTets()) * nloc * nloc;
  tm.reserve(3 * est);
  tk.reserve(9 * est);
  tup.reserve(3 * est);
  tpu.reserve(3 * est);
  tpp.reserve(est);

  Eigen::MatrixXd lm(nloc, nloc), lk(3 * nloc, 3 * nloc), lup(3 * nloc, nloc),
      lpu(nloc, 3 * nloc), lpp(nloc, nloc);
  Eigen::VectorXd lg(nloc);
  Eigen::Matrix<double, 6, Eigen::Dynamic> bmat(6, 3 * nloc);
  BasisAtPoint bp;

  for (int t = 0; t < mesh.NumTets(); t++)
  {
    const TetGeometry geo(mesh, t);
    lm.setZero();
    lk.setZero();
    lup.setZero();
    lpu.setZero();
    lpp.setZero();
    lg.setZero();
    for (std::size_t q = 0; q < quad.Size(); q++)
    {
      EvalBasis(space.Basis(), geo, quad.points[q], quad.weights[q], bp);
      const double w = bp.weight;
      const double rho = mat.rho(bp.x);
      const Stiffness6 c = mat.stiffness(bp.x);
      const Piezo63 e = mat.piezo(bp.x);
      const Matrix3 kappa = mat.dielectric(bp.x);
      for (int i = 0; i < nloc; i++)
      {
        for (int comp = 0; comp < 3; comp++)
        {
          bmat.col(3 * i + comp) = BasisStrain(bp.grads.row(i).transpose(), comp);
        }
      }
      lm.noalias() += (w * rho) * bp.values * bp.values.transpose();
      lk.noalias() += w * bmat.transpose() * c * bmat;
      const Eigen::MatrixXd e_grad = e * bp.grads.transpose();  // 6 x nloc: E grad(phi_j)
      lup.noalias() += w * bmat.transpose() * e_grad;
      // (E^T eps(u_j), grad phi_i), built from E^T rather than by transposition.
      const Eigen::MatrixXd et_strain = e.transpose() * bmat;  // 3 x 3nloc
      lpu.noalias() += w * bp.grads * et_strain;
      lpp.noalias() += w * bp.grads * kappa * bp.grads.transpose();
      lg += w * bp.values;
    }
    const auto &dofs = space.ElementDofs(t);
    for (int i = 0; i < nloc; i++)
    {
      g[dofs[i]] += lg[i];
      for (int j = 0; j < nloc; j++)
      {
        tpp.emplace_back(dofs[i], dofs[j], lpp(i, j));
        for (int c = 0; c < 3; c++)
        {
          tm.emplace_back(3 * dofs[i] + c, 3 * dofs[j] + c, lm(i, j));
          tup.emplace_back(3 * dofs[i] + c, dofs[j], lup(3 * i + c, j));
          tpu.emplace_back(dofs[i], 3 * dofs[j] + c, lpu(i, 3 * j + c));
          for (int d = 0; d < 3; d++)
          {
            tk.emplace_back(3 * dofs[i] + c, 3 * dofs[j] + d, lk(3 * i + c, 3 * j + d));
          }
        }
      }
    }
  }

  DiscreteOperators ops;
  ops.vector = vspace;
  ops.scalar = vspace->ScalarPtr();
  ops.mass_full.resize(nu, nu);
  ops.mass_full.setFromTriplets(tm.begin(), tm.end());
  ops.k_uu_full.resize(nu, nu);
  ops.k_uu_full.setFromTriplets(tk.begin(), tk.end());
  ops.k_upsi_full.resize(nu, ns);
  ops.k_upsi_full.setFromTriplets(tup.begin(), tup.end());
  ops.k_psiu_full.resize(ns, nu);
  ops.k_psiu_full.setFromTriplets(tpu.begin(), tpu.end());
  ops.k_psipsi.resize(ns, ns);
  ops.k_psipsi.setFromTriplets(tpp.begin(), tpp.end());
  ops.grounding = g;

  const SparseMatrix p = detail::Selector(vspace->FreeDofs(), nu);
  const SparseMatrix pt = p.transpose();
  ops.mass = p * ops.mass_full * pt;
  ops.k_uu = p * ops.k_uu_full * pt;
  ops.k_upsi = p * ops.k_upsi_full;
  ops.k_psiu = ops.k_psiu_full * pt;

  // Boundary control map: exact integration of the P_k trace over each face.
  const QuadratureRule tri = TriangleRule(k);
  Triplets tb;
  ops.face_areas.resize(mesh.NumFaces());
  Eigen::VectorXd vals;
  for (int f = 0; f < mesh.NumFaces(); f++)
  {
    const auto &face = mesh.Faces()[f];
    const double area = BoundaryFaceArea(mesh, f);
    ops.face_areas[f] = area;
    const auto &dofs = space.ElementDofs(face.tet);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(nloc);
    for (std::size_t q = 0; q < tri.Size(); q++)
    {
      space.Basis().Eval(BaryOnFace(face.opposite, tri.points[q]), vals);
      acc += (2.0 * area * tri.weights[q]) * vals;
    }
    for (int i : space.FaceNodes(f))
    {
      tb.emplace_back(dofs[i], f, acc[i]);
    }
  }
  ops.control.resize(ns, mesh.NumFaces());
  ops.control.setFromTriplets(tb.begin(), tb.end());
  return ops;
}

inline DiscreteOperators Assemble(std::shared_ptr<const VectorSpace> vspace,
                                  const MaterialSet &mat)
{
  return Assemble(vspace, mat,
                  TetRule(DefaultQuadratureExactness(vspace->Scalar().Degree())));
}

// Coordinate-format text dump "i j value" (zero-based).
inline void WriteCoordinate(std::ostream &out, const SparseMatrix &a)
{
  out.precision(17);
  for (int c = 0; c < a.outerSize(); c++)
  {
    for (SparseMatrix::InnerIterator it(a, c); it; ++it)
    {
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    }
  }
}

//
// Load vectors.
//
using VectorFn = std::function<Eigen::Vector3d(const Point &)>;
using ScalarFn = std::function<double(const Point &)>;
// Boundary data depending on position and outward unit normal.
using BoundaryVectorFn = std::function<Eigen::Vector3d(const Point &, const Eigen::Vector3d &)>;
using BoundaryScalarFn = std::function<double(const Point &, const Eigen::Vector3d &)>;

// (weight * f, w) over every displacement dof (full indexing).
inline Eigen::VectorXd VectorLoadFull(const ScalarSpace &space, const VectorFn &f,
                                      const QuadratureRule &quad, const ScalarFn &weight = {})
{
  const Mesh &mesh = space.GetMesh();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(3 * space.Size());
  BasisAtPoint bp;
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    const TetGeometry geo(mesh, t);
    const auto &dofs = space.ElementDofs(t);
    for (std::size_t q = 0; q < quad.Size(); q++)
    {
      EvalBasis(space.Basis(), geo, quad.points[q], quad.weights[q], bp);
      Eigen::Vector3d fx = f(bp.x);
      if (weight)
      {
        fx *= weight(bp.x);
      }
      for (int i = 0; i < bp.values.size(); i++)
      {
        b.segment<3>(3 * dofs[i]) += (bp.weight * bp.values[i]) * fx;
      }
    }
  }
  return b;
}

inline Eigen::VectorXd ScalarLoad(const ScalarSpace &space, const ScalarFn &f,
                                  const QuadratureRule &quad)
{
  const Mesh &mesh = space.GetMesh();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(space.Size());
  BasisAtPoint bp;
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    const TetGeometry geo(mesh, t);
    const auto &dofs = space.ElementDofs(t);
    for (std::size_t q = 0; q < quad.Size(); q++)
    {
      EvalBasis(space.Basis(), geo, quad.points[q], quad.weights[q], bp);
      const double fx = f(bp.x);
      for (int i = 0; i < bp.values.size(); i++)
      {
        b[dofs[i]] += bp.weight * bp.values[i] * fx;
      }
    }
  }
  return b;
}

// <g, w> over the faces accepted by `use_face` (full displacement indexing).
inline Eigen::VectorXd BoundaryVectorLoadFull(const ScalarSpace &space, const BoundaryVectorFn &g,
                                              const std::function<bool(int)> &use_face,
                                              const QuadratureRule &tri)
{
  const Mesh &mesh = space.GetMesh();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(3 * space.Size());
  Eigen::VectorXd vals;
  for (int f = 0; f < mesh.NumFaces(); f++)
  {
    if (!use_face(f))
    {
      continue;
    }
    const auto &face = mesh.Faces()[f];
    const double area = BoundaryFaceArea(mesh, f);
    const Eigen::Vector3d n = mesh.OutwardNormal(f);
    const auto &dofs = space.ElementDofs(face.tet);
    for (std::size_t q = 0; q < tri.Size(); q++)
    {
      const auto l = BaryOnFace(face.opposite, tri.points[q]);
      Point x = Point::Zero();
      for (int j = 0; j < 4; j++)
      {
        x += l[j] * mesh.Vertices()[mesh.Tets()[face.tet][j]];
      }
      space.Basis().Eval(l, vals);
      const Eigen::Vector3d gx = g(x, n) * (2.0 * area * tri.weights[q]);
      for (int i : space.FaceNodes(f))
      {
        b.segment<3>(3 * dofs[i]) += vals[i] * gx;
      }
    }
  }
  return b;
}

// <g, phi> over every boundary face.
inline Eigen::VectorXd BoundaryScalarLoad(const ScalarSpace &space, const BoundaryScalarFn &g,
                                          const QuadratureRule &tri)
{
  const Mesh &mesh = space.GetMesh();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(space.Size());
  Eigen::VectorXd vals;
  for (int f = 0; f < mesh.NumFaces(); f++)
  {
    const auto &face = mesh.Faces()[f];
    const double area = BoundaryFaceArea(mesh, f);
    const Eigen::Vector3d n = mesh.OutwardNormal(f);
    const auto &dofs = space.ElementDofs(face.tet);
    for (std::size_t q = 0; q < tri.Size(); q++)
    {
      const auto l = BaryOnFace(face.opposite, tri.points[q]);
      Point x = Point::Zero();
      for (int j = 0; j < 4; j++)
      {
        x += l[j] * mesh.Vertices()[mesh.Tets()[face.tet][j]];
      }
      space.Basis().Eval(l, vals);
      const double gx = g(x, n) * (2.0 * area * tri.weights[q]);
      for (int i : space.FaceNodes(f))
      {
        b[dofs[i]] += vals[i] * gx;
      }
    }
  }
  return b;
}

//
// Weighted L2 projection onto V_h: solves M c = (rho f, w) on the free dofs.
//
class RhoProjector
{
public:
  explicit RhoProjector(const DiscreteOperators &ops)
    : ops_(&ops), quad_(TetRule(DefaultQuadratureExactness(ops.scalar->Degree())))
  {
    solver_.compute(ops.mass);
    if (solver_.info() != Eigen::Success)
    {
      throw std::runtime_error("singular mass matrix");
    }
  }

  // Target and density evaluated at quadrature points.
  Eigen::VectorXd Project(const VectorFn &target, const ScalarFn &rho) const
  {
    const Eigen::VectorXd load = VectorLoadFull(*ops_->scalar, target, quad_, rho);
    return solver_.solve(ops_->vector->Restrict(load));
  }

private:
  const DiscreteOperators *ops_;
  QuadratureRule quad_;
  Eigen::SimplicialLLT<SparseMatrix> solver_;
};

// Subtracts the constant mode so that g . psi = 0.
inline Eigen::VectorXd ApplyGrounding(const Eigen::VectorXd &grounding, const Eigen::VectorXd &psi)
{
  const double volume = grounding.sum();
  return psi - Eigen::VectorXd::Constant(psi.size(), grounding.dot(psi) / volume);
}

inline double RhoNorm(const DiscreteOperators &ops, const Eigen::VectorXd &u_free)
{
  return std::sqrt(std::max(0.0, u_free.dot(ops.mass * u_free)));
}

//
// Errors against exact fields, by quadrature.
//
struct FieldErrors
{
  double l2 = 0.0;
  double h1_semi = 0.0;
};

using GradFn = std::function<Eigen::Matrix3d(const Point &)>;  // row c = grad of component c

inline FieldErrors VectorFieldErrors(const ScalarSpace &space, const Eigen::VectorXd &u_full,
                                     const VectorFn &exact, const GradFn &exact_grad,
                                     const QuadratureRule &quad)
{
  const Mesh &mesh = space.GetMesh();
  double l2 = 0.0, h1 = 0.0;
  BasisAtPoint bp;
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    const TetGeometry geo(mesh, t);
    const auto &dofs = space.ElementDofs(t);
    for (std::size_t q = 0; q < quad.Size(); q++)
    {
      EvalBasis(space.Basis(), geo, quad.points[q], quad.weights[q], bp);
      Eigen::Vector3d uh = Eigen::Vector3d::Zero();
      Eigen::Matrix3d gh = Eigen::Matrix3d::Zero();
      for (int i = 0; i < bp.values.size(); i++)
      {
        const Eigen::Vector3d ui = u_full.segment<3>(3 * dofs[i]);
        uh += bp.values[i] * ui;
        gh += ui * bp.grads.row(i);
      }
      l2 += bp.weight * (exact(bp.x) - uh).squaredNorm();
      h1 += bp.weight * (exact_grad(bp.x) - gh).squaredNorm();
    }
  }
  return {std::sqrt(l2), std::sqrt(h1)};
}

inline FieldErrors ScalarFieldErrors(const ScalarSpace &space, const Eigen::VectorXd &psi,
                                     const ScalarFn &exact, const VectorFn &exact_grad,
                                     const QuadratureRule &quad)
{
  const Mesh &mesh = space.GetMesh();
  double l2 = 0.0, h1 = 0.0;
  BasisAtPoint bp;
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    const TetGeometry geo(mesh, t);
    const auto &dofs = space.ElementDofs(t);
    for (std::size_t q = 0; q < quad.Size(); q++)
    {
      EvalBasis(space.Basis(), geo, quad.points[q], quad.weights[q], bp);
      double ph = 0.0;
      Eigen::Vector3d gh = Eigen::Vector3d::Zero();
      for (int i = 0; i < bp.values.size(); i++)
      {
        ph += bp.values[i] * psi[dofs[i]];
        gh += psi[dofs[i]] * bp.grads.row(i).transpose();
      }
      l2 += bp.weight * std::pow(exact(bp.x) - ph, 2);
      h1 += bp.weight * (exact_grad(bp.x) - gh).squaredNorm();
    }
  }
  return {std::sqrt(l2), std::sqrt(h1)};
}

// rho-weighted L2 distance between a discrete displacement and an exact field.
inline double RhoDistance(const ScalarSpace &space, const Eigen::VectorXd &u_full,
                          const VectorFn &exact, const ScalarFn &rho, const QuadratureRule &quad)
{
  const Mesh &mesh = space.GetMesh();
  double s = 0.0;
  BasisAtPoint bp;
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    const TetGeometry geo(mesh, t);
    const auto &dofs = space.ElementDofs(t);
    for (std::size_t q = 0; q < quad.Size(); q++)
    {
      EvalBasis(space.Basis(), geo, quad.points[q], quad.weights[q], bp);
      Eigen::Vector3d uh = Eigen::Vector3d::Zero();
      for (int i = 0; i < bp.values.size(); i++)
      {
        uh += bp.values[i] * u_full.segment<3>(3 * dofs[i]);
      }
      s += bp.weight * rho(bp.x) * (exact(bp.x) - uh).squaredNorm();
    }
  }
  return std::sqrt(s);
}

}  // namespace piezoctrl

#endif  // PIEZOCTRL_ASSEMBLY_HPP
