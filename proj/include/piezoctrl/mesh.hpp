// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_MESH_HPP
#define PIEZOCTRL_MESH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace piezoctrl
{

using Point = Eigen::Vector3d;

struct BoundaryFace
{
  std::array<int, 3> vertices;
  int tag = 0;
  // Parent tetrahedron and the local index of the vertex opposite this face.
  int tet = -1;
  int opposite = -1;
};

//
// Conforming tetrahedral mesh with a tagged boundary triangulation. Immutable once built.
//
class Mesh
{
public:
  Mesh() = default;

  // Builds adjacency and validates orientation. Every listed face must be a boundary face
  // of exactly one tet, and together they must cover the boundary.
  Mesh(std::vector<Point> vertices, std::vector<std::array<int, 4>> tets,
       std::vector<BoundaryFace> faces, std::set<int> dirichlet_tags)
    : vertices_(std::move(vertices)), tets_(std::move(tets)), faces_(std::move(faces)),
      dirichlet_tags_(std::move(dirichlet_tags))
  {
    Finalize();
  }

  const std::vector<Point> &Vertices() const { return vertices_; }
  const std::vector<std::array<int, 4>> &Tets() const { return tets_; }
  const std::vector<BoundaryFace> &Faces() const { return faces_; }
  const std::set<int> &DirichletTags() const { return dirichlet_tags_; }
  const std::set<int> &NeumannTags() const { return neumann_tags_; }

  int NumVertices() const { return static_cast<int>(vertices_.size()); }
  int NumTets() const { return static_cast<int>(tets_.size()); }
  int NumFaces() const { return static_cast<int>(faces_.size()); }

  bool IsDirichletFace(int f) const { return dirichlet_tags_.count(faces_.at(f).tag) > 0; }

  double SignedVolume(int t) const
  {
    const auto &v = tets_[t];
    const Point a = vertices_[v[1]] - vertices_[v[0]];
    const Point b = vertices_[v[2]] - vertices_[v[0]];
    const Point c = vertices_[v[3]] - vertices_[v[0]];
    return a.dot(b.cross(c)) / 6.0;
  }

  Point FaceCentroid(int f) const
  {
    const auto &v = faces_.at(f).vertices;
    return (vertices_[v[0]] + vertices_[v[1]] + vertices_[v[2]]) / 3.0;
  }

  // Unit normal pointing away from the parent tet.
  Point OutwardNormal(int f) const
  {
    const auto &face = faces_.at(f);
    const Point &a = vertices_[face.vertices[0]];
    Point n = (vertices_[face.vertices[1]] - a).cross(vertices_[face.vertices[2]] - a);
    const Point &opp = vertices_[tets_[face.tet][face.opposite]];
    if (n.dot(opp - a) > 0.0)
    {
      n = -n;
    }
    return n.normalized();
  }

private:
  std::vector<Point> vertices_;
  std::vector<std::array<int, 4>> tets_;
  std::vector<BoundaryFace> faces_;
  std::set<int> dirichlet_tags_, neumann_tags_;

  void Finalize()
  {
    const int nv = NumVertices();
    for (int t = 0; t < NumTets(); t++)
    {
      for (int v : tets_[t])
      {
        if (v < 0 || v >= nv)
        {
          throw std::invalid_argument("tet vertex index out of range");
        }
      }
      if (!(SignedVolume(t) > 0.0))
      {
        throw std::invalid_argument("tet " + std::to_string(t) +
                                    " has non-positive signed volume");
      }
    }

    // Count every tet face; boundary faces appear exactly once.
    std::map<std::array<int, 3>, std::vector<std::pair<int, int>>> owners;
    for (int t = 0; t < NumTets(); t++)
    {
      for (int opp = 0; opp < 4; opp++)
      {
        std::array<int, 3> key;
        int m = 0;
        for (int j = 0; j < 4; j++)
        {
          if (j != opp)
          {
            key[m++] = tets_[t][j];
          }
        }
        std::sort(key.begin(), key.end());
        owners[key].emplace_back(t, opp);
      }
    }
    std::size_t n_boundary = 0;
    for (const auto &[key, list] : owners)
    {
      if (list.size() == 1)
      {
        n_boundary++;
      }
      else if (list.size() != 2)
      {
        throw std::invalid_argument("non-manifold mesh: face shared by more than two tets");
      }
    }
    if (n_boundary != faces_.size())
    {
      throw std::invalid_argument("boundary faces do not cover the boundary (" +
                                  std::to_string(faces_.size()) + " listed, " +
                                  std::to_string(n_boundary) + " expected)");
    }
    std::set<std::array<int, 3>> seen;
    std::set<int> tags;
    for (auto &face : faces_)
    {
      std::array<int, 3> key = face.vertices;
      std::sort(key.begin(), key.end());
      auto it = owners.find(key);
      if (it == owners.end() || it->second.size() != 1)
      {
        throw std::invalid_argument("listed face is not a boundary face");
      }
      if (!seen.insert(key).second)
      {
        throw std::invalid_argument("duplicate boundary face");
      }
      face.tet = it->second[0].first;
      face.opposite = it->second[0].second;
      tags.insert(face.tag);
    }
    for (int tag : tags)
    {
      if (!dirichlet_tags_.count(tag))
      {
        neumann_tags_.insert(tag);
      }
    }
  }
};

// Area of a triangle; throws for degenerate input.
inline double TriangleArea(const Point &a, const Point &b, const Point &c)
{
  const double area = 0.5 * (b - a).cross(c - a).norm();
  const double scale =
      std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), (c - b).squaredNorm()});
  if (!(area > 1e-14 * scale))
  {
    throw std::domain_error("degenerate boundary triangle");
  }
  return area;
}

inline double BoundaryFaceArea(const Mesh &mesh, int face_index)
{
  if (face_index < 0 || face_index >= mesh.NumFaces())
  {
    throw std::out_of_range("boundary face index out of range");
  }
  const auto &v = mesh.Faces()[face_index].vertices;
  const auto &x = mesh.Vertices();
  return TriangleArea(x[v[0]], x[v[1]], x[v[2]]);
}

struct BoundaryPartition
{
  std::map<int, std::vector<int>> faces_by_tag;
  std::vector<double> face_areas;

  double TotalArea() const
  {
    double s = 0.0;
    for (double a : face_areas)
    {
      s += a;
    }
    return s;
  }
};

inline BoundaryPartition MakeBoundaryPartition(const Mesh &mesh)
{
  BoundaryPartition part;
  part.face_areas.resize(mesh.NumFaces());
  for (int f = 0; f < mesh.NumFaces(); f++)
  {
    part.face_areas[f] = BoundaryFaceArea(mesh, f);
    part.faces_by_tag[mesh.Faces()[f].tag].push_back(f);
  }
  return part;
}

//
// Unit cube helpers. Cube-mesh face tags encode the side of the cube and the boundary type:
// tag = side + 6 for Dirichlet faces, tag = side for Neumann faces, with sides numbered
// 0: x=0, 1: x=1, 2: y=0, 3: y=1, 4: z=0, 5: z=1.
//
inline int CubeSide(int tag) { return tag % 6; }

inline int CubeSideOfPoint(const Point &c, double tol = 1e-12)
{
  for (int d = 0; d < 3; d++)
  {
    if (std::abs(c[d]) < tol)
    {
      return 2 * d;
    }
    if (std::abs(c[d] - 1.0) < tol)
    {
      return 2 * d + 1;
    }
  }
  return -1;
}

using FacePredicate = std::function<bool(const Point &)>;

// Divides (0,1)^3 into M^3 cubes, each split into six tetrahedra sharing the diagonal from
// the cube's lowest to highest corner (Kuhn subdivision, conforming across cubes).
inline Mesh BuildCubeMesh(int M, const FacePredicate &dirichlet_rule)
{
  if (M < 1)
  {
    throw std::invalid_argument("cube mesh needs M >= 1");
  }
  const int n1 = M + 1;
  auto vid = [n1](int i, int j, int k) { return i + n1 * (j + n1 * k); };

  std::vector<Point> vertices;
  vertices.reserve(n1 * n1 * n1);
  for (int k = 0; k <= M; k++)
  {
    for (int j = 0; j <= M; j++)
    {
      for (int i = 0; i <= M; i++)
      {
        vertices.emplace_back(double(i) / M, double(j) / M, double(k) / M);
      }
    }
  }

  static constexpr std::array<std::array<int, 3>, 6> perms = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<std::array<int, 4>> tets;
  tets.reserve(6 * M * M * M);
  for (int k = 0; k < M; k++)
  {
    for (int j = 0; j < M; j++)
    {
      for (int i = 0; i < M; i++)
      {
        for (const auto &p : perms)
        {
          std::array<int, 3> c = {i, j, k};
          std::array<int, 4> t;
          t[0] = vid(c[0], c[1], c[2]);
          for (int s = 0; s < 3; s++)
          {
            c[p[s]]++;
            t[s + 1] = vid(c[0], c[1], c[2]);
          }
          const Point a = vertices[t[1]] - vertices[t[0]];
          const Point b = vertices[t[2]] - vertices[t[0]];
          const Point d = vertices[t[3]] - vertices[t[0]];
          if (a.dot(b.cross(d)) < 0.0)
          {
            std::swap(t[2], t[3]);
          }
          tets.push_back(t);
        }
      }
    }
  }

  // Boundary faces in deterministic (sorted key) order.
  std::map<std::array<int, 3>, int> count;
  for (const auto &t : tets)
  {
    for (int opp = 0; opp < 4; opp++)
    {
      std::array<int, 3> key;
      int m = 0;
      for (int j = 0; j < 4; j++)
      {
        if (j != opp)
        {
          key[m++] = t[j];
        }
      }
      std::sort(key.begin(), key.end());
      count[key]++;
    }
  }
  std::vector<BoundaryFace> faces;
  std::set<int> dirichlet_tags;
  for (const auto &[key, c] : count)
  {
    if (c != 1)
    {
      continue;
    }
    const Point centroid = (vertices[key[0]] + vertices[key[1]] + vertices[key[2]]) / 3.0;
    const int side = CubeSideOfPoint(centroid);
    const bool dirichlet = dirichlet_rule && dirichlet_rule(centroid);
    BoundaryFace face;
    face.vertices = key;
    face.tag = side + (dirichlet ? 6 : 0);
    if (dirichlet)
    {
      dirichlet_tags.insert(face.tag);
    }
    faces.push_back(face);
  }
  return Mesh(std::move(vertices), std::move(tets), std::move(faces), std::move(dirichlet_tags));
}

//
// Minimal ASCII mesh format:
//   nv nt nf
//   x y z            (nv lines)
//   v0 v1 v2 v3      (nt lines)
//   v0 v1 v2 tag     (nf lines)
// Tets with negative orientation are reordered. The tag-to-type mapping comes from the caller.
//
inline Mesh ReadAsciiMesh(std::istream &in, const std::set<int> &dirichlet_tags)
{
  int nv = 0, nt = 0, nf = 0;
  if (!(in >> nv >> nt >> nf) || nv < 4 || nt < 1 || nf < 4)
  {
    throw std::invalid_argument("bad mesh header");
  }
  std::vector<Point> vertices(nv);
  for (auto &p : vertices)
  {
    if (!(in >> p[0] >> p[1] >> p[2]))
    {
      throw std::invalid_argument("truncated vertex list");
    }
  }
  std::vector<std::array<int, 4>> tets(nt);
  for (auto &t : tets)
  {
    if (!(in >> t[0] >> t[1] >> t[2] >> t[3]))
    {
      throw std::invalid_argument("truncated tet list");
    }
    for (int v : t)
    {
      if (v < 0 || v >= nv)
      {
        throw std::invalid_argument("tet vertex index out of range");
      }
    }
    const Point a = vertices[t[1]] - vertices[t[0]];
    const Point b = vertices[t[2]] - vertices[t[0]];
    const Point c = vertices[t[3]] - vertices[t[0]];
    if (a.dot(b.cross(c)) < 0.0)
    {
      std::swap(t[2], t[3]);
    }
  }
  std::vector<BoundaryFace> faces(nf);
  for (auto &f : faces)
  {
    if (!(in >> f.vertices[0] >> f.vertices[1] >> f.vertices[2] >> f.tag))
    {
      throw std::invalid_argument("truncated face list");
    }
  }
  return Mesh(std::move(vertices), std::move(tets), std::move(faces), dirichlet_tags);
}

inline Mesh ReadAsciiMesh(const std::string &path, const std::set<int> &dirichlet_tags)
{
  std::ifstream in(path);
  if (!in)
  {
    throw std::runtime_error("cannot open mesh file " + path);
  }
  return ReadAsciiMesh(in, dirichlet_tags);
}

inline void WriteAsciiMesh(std::ostream &out, const Mesh &mesh)
{
  out.precision(17);
  out << mesh.NumVertices() << ' ' << mesh.NumTets() << ' ' << mesh.NumFaces() << '\n';
  for (const auto &p : mesh.Vertices())
  {
    out << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  }
  for (const auto &t : mesh.Tets())
  {
    out << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  }
  for (const auto &f : mesh.Faces())
  {
    out << f.vertices[0] << ' ' << f.vertices[1] << ' ' << f.vertices[2] << ' ' << f.tag << '\n';
  }
}

}  // namespace piezoctrl

#endif  // PIEZOCTRL_MESH_HPP
