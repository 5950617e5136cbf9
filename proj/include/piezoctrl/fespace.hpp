// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_FESPACE_HPP
#define PIEZOCTRL_FESPACE_HPP

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "piezoctrl/lagrange.hpp"
#include "piezoctrl/mesh.hpp"
#include "piezoctrl/quadrature.hpp"

namespace piezoctrl
{

//
// Affine map of a tetrahedron: x = x0 + J xi, with barycentric gradients.
//
struct TetGeometry
{
  Point x0;
  Eigen::Matrix3d jac;
  double det = 0.0;
  Eigen::Matrix<double, 4, 3> grad_bary;

  TetGeometry(const Mesh &mesh, int t)
  {
    const auto &v = mesh.Tets()[t];
    const auto &x = mesh.Vertices();
    x0 = x[v[0]];
    for (int j = 0; j < 3; j++)
    {
      jac.col(j) = x[v[j + 1]] - x0;
    }
    det = jac.determinant();
    if (!(det > 0.0))
    {
      throw std::domain_error("inverted element " + std::to_string(t) +
                              " (non-positive Jacobian determinant)");
    }
    const Eigen::Matrix3d inv = jac.inverse();
    grad_bary.row(1) = inv.row(0);
    grad_bary.row(2) = inv.row(1);
    grad_bary.row(3) = inv.row(2);
    grad_bary.row(0) = -(inv.row(0) + inv.row(1) + inv.row(2));
  }

  Point Map(const Eigen::Vector3d &xi) const { return x0 + jac * xi; }
  double Volume() const { return det / 6.0; }
};

inline std::array<double, 4> BaryFromRef(const Eigen::Vector3d &xi)
{
  return {1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]};
}

// Barycentric coordinates (in the parent tet) of a triangle-rule point on the face opposite
// local vertex `opposite`.
inline std::array<double, 4> BaryOnFace(int opposite, const Eigen::Vector3d &st)
{
  std::array<double, 4> l{};
  int m = 0;
  const double face_bary[3] = {1.0 - st[0] - st[1], st[0], st[1]};
  for (int j = 0; j < 4; j++)
  {
    if (j != opposite)
    {
      l[j] = face_bary[m++];
    }
  }
  l[opposite] = 0.0;
  return l;
}

//
// Continuous P_k Lagrange space W_h on a tetrahedral mesh. Dofs are identified across
// elements by their barycentric support, so numbering follows first encounter in element
// order.
//
class ScalarSpace
{
public:
  ScalarSpace(std::shared_ptr<const Mesh> mesh, int degree)
    : mesh_(std::move(mesh)), basis_(degree)
  {
    const int nloc = basis_.NumNodes();
    using Key = std::array<std::pair<int, int>, 4>;
    std::map<Key, int> index;
    elem_dofs_.resize(mesh_->NumTets());
    vertex_dof_.assign(mesh_->NumVertices(), -1);
    for (int t = 0; t < mesh_->NumTets(); t++)
    {
      const auto &tv = mesh_->Tets()[t];
      elem_dofs_[t].resize(nloc);
      for (int i = 0; i < nloc; i++)
      {
        const auto &alpha = basis_.Node(i);
        Key key;
        key.fill({-1, 0});
        int m = 0;
        for (int j = 0; j < 4; j++)
        {
          if (alpha[j] > 0)
          {
            key[m++] = {tv[j], alpha[j]};
          }
        }
        std::sort(key.begin(), key.begin() + m);
        auto [it, inserted] = index.emplace(key, static_cast<int>(coords_.size()));
        if (inserted)
        {
          Point c = Point::Zero();
          std::vector<int> support;
          for (int j = 0; j < 4; j++)
          {
            c += (double(alpha[j]) / degree) * mesh_->Vertices()[tv[j]];
            if (alpha[j] > 0)
            {
              support.push_back(tv[j]);
            }
          }
          coords_.push_back(c);
          support_.push_back(support);
          if (support.size() == 1)
          {
            vertex_dof_[support[0]] = it->second;
          }
        }
        elem_dofs_[t][i] = it->second;
      }
    }

    face_dofs_.resize(mesh_->NumFaces());
    face_nodes_.resize(mesh_->NumFaces());
    for (int f = 0; f < mesh_->NumFaces(); f++)
    {
      const auto &face = mesh_->Faces()[f];
      for (int i = 0; i < nloc; i++)
      {
        if (basis_.Node(i)[face.opposite] == 0)
        {
          face_nodes_[f].push_back(i);
          face_dofs_[f].push_back(elem_dofs_[face.tet][i]);
        }
      }
    }
  }

  const Mesh &GetMesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> MeshPtr() const { return mesh_; }
  const LagrangeTet &Basis() const { return basis_; }
  int Degree() const { return basis_.Degree(); }
  int Size() const { return static_cast<int>(coords_.size()); }
  const std::vector<int> &ElementDofs(int t) const { return elem_dofs_[t]; }
  const Point &DofCoord(int i) const { return coords_[i]; }
  const std::vector<Point> &DofCoords() const { return coords_; }
  int VertexDof(int v) const { return vertex_dof_[v]; }
  // Global dofs (and local node indices in the parent tet) lying on boundary face f.
  const std::vector<int> &FaceDofs(int f) const { return face_dofs_[f]; }
  const std::vector<int> &FaceNodes(int f) const { return face_nodes_[f]; }

  // Nodal interpolant.
  template <typename Fn>
  Eigen::VectorXd Interpolate(Fn &&fn) const
  {
    Eigen::VectorXd c(Size());
    for (int i = 0; i < Size(); i++)
    {
      c[i] = fn(coords_[i]);
    }
    return c;
  }

private:
  std::shared_ptr<const Mesh> mesh_;
  LagrangeTet basis_;
  std::vector<std::vector<int>> elem_dofs_;
  std::vector<Point> coords_;
  std::vector<std::vector<int>> support_;
  std::vector<int> vertex_dof_;
  std::vector<std::vector<int>> face_dofs_, face_nodes_;
};

//
// Vector space W_h^3 with dofs on Dirichlet-tagged faces constrained. Full (unconstrained)
// index of component c at scalar dof s is 3 s + c; the free index enumerates unconstrained
// full indices in increasing order.
//
class VectorSpace
{
public:
  explicit VectorSpace(std::shared_ptr<const ScalarSpace> scalar) : scalar_(std::move(scalar))
  {
    const int ns = scalar_->Size();
    std::vector<char> fixed(ns, 0);
    const Mesh &mesh = scalar_->GetMesh();
    for (int f = 0; f < mesh.NumFaces(); f++)
    {
      if (mesh.IsDirichletFace(f))
      {
        for (int d : scalar_->FaceDofs(f))
        {
          fixed[d] = 1;
        }
      }
    }
    full_to_free_.assign(3 * ns, -1);
    for (int s = 0; s < ns; s++)
    {
      for (int c = 0; c < 3; c++)
      {
        if (fixed[s])
        {
          constrained_.push_back(3 * s + c);
        }
        else
        {
          full_to_free_[3 * s + c] = static_cast<int>(free_.size());
          free_.push_back(3 * s + c);
        }
      }
    }
  }

  const ScalarSpace &Scalar() const { return *scalar_; }
  std::shared_ptr<const ScalarSpace> ScalarPtr() const { return scalar_; }
  int FullSize() const { return 3 * scalar_->Size(); }
  int Size() const { return static_cast<int>(free_.size()); }
  const std::vector<int> &FreeDofs() const { return free_; }
  const std::vector<int> &ConstrainedDofs() const { return constrained_; }
  int FreeIndex(int full) const { return full_to_free_[full]; }

  Eigen::VectorXd Restrict(const Eigen::VectorXd &full) const
  {
    Eigen::VectorXd r(Size());
    for (int i = 0; i < Size(); i++)
    {
      r[i] = full[free_[i]];
    }
    return r;
  }

  Eigen::VectorXd RestrictConstrained(const Eigen::VectorXd &full) const
  {
    Eigen::VectorXd r(static_cast<int>(constrained_.size()));
    for (std::size_t i = 0; i < constrained_.size(); i++)
    {
      r[i] = full[constrained_[i]];
    }
    return r;
  }

  // Free coefficients plus optional constrained values into a full vector.
  Eigen::VectorXd Extend(const Eigen::VectorXd &free,
                         const Eigen::VectorXd &constrained = Eigen::VectorXd()) const
  {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(FullSize());
    for (int i = 0; i < Size(); i++)
    {
      full[free_[i]] = free[i];
    }
    if (constrained.size() > 0)
    {
      for (std::size_t i = 0; i < constrained_.size(); i++)
      {
        full[constrained_[i]] = constrained[i];
      }
    }
    return full;
  }

  template <typename Fn>
  Eigen::VectorXd InterpolateFull(Fn &&fn) const
  {
    Eigen::VectorXd c(FullSize());
    for (int s = 0; s < scalar_->Size(); s++)
    {
      const Eigen::Vector3d v = fn(scalar_->DofCoord(s));
      c.segment<3>(3 * s) = v;
    }
    return c;
  }

private:
  std::shared_ptr<const ScalarSpace> scalar_;
  std::vector<int> free_, constrained_, full_to_free_;
};

}  // namespace piezoctrl

#endif  // PIEZOCTRL_FESPACE_HPP
