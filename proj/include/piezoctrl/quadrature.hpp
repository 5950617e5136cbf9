// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_QUADRATURE_HPP
#define PIEZOCTRL_QUADRATURE_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace piezoctrl
{

//
// Points and weights on a reference simplex. Tetrahedron: {x,y,z >= 0, x+y+z <= 1}, volume
// 1/6. Triangle: {x,y >= 0, x+y <= 1}, area 1/2. Points are stored in the first `dim` entries.
//
struct QuadratureRule
{
  int dim = 3;
  int exactness = 0;
  std::vector<Eigen::Vector3d> points;
  std::vector<double> weights;

  std::size_t Size() const { return weights.size(); }
};

namespace detail
{

// Gauss-Jacobi nodes and weights on [0,1] for the weight (1-t)^a, by Golub-Welsch.
inline void GaussJacobi01(int n, int a, std::vector<double> &t, std::vector<double> &w)
{
  const double alpha = a, beta = 0.0;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; k++)
  {
    const double s = 2.0 * k + alpha + beta;
    J(k, k) = (k == 0) ? (beta - alpha) / (alpha + beta + 2.0)
                       : (beta * beta - alpha * alpha) / (s * (s + 2.0));
    if (k + 1 < n)
    {
      const double m = k + 1.0;
      const double sm = 2.0 * m + alpha + beta;
      const double b = 4.0 * m * (m + alpha) * (m + beta) * (m + alpha + beta) /
                       (sm * sm * (sm + 1.0) * (sm - 1.0));
      J(k, k + 1) = J(k + 1, k) = std::sqrt(b);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  // mu0 = int_{-1}^{1} (1-x)^a dx = 2^{a+1}/(a+1); mapping to [0,1] scales by 2^{-a-1}.
  const double mu0 = std::pow(2.0, alpha + 1.0) / (alpha + 1.0);
  const double scale = std::pow(2.0, -alpha - 1.0);
  t.resize(n);
  w.resize(n);
  for (int k = 0; k < n; k++)
  {
    const double v0 = es.eigenvectors()(0, k);
    t[k] = 0.5 * (1.0 + es.eigenvalues()[k]);
    w[k] = mu0 * v0 * v0 * scale;
  }
}

}  // namespace detail

// Collapsed-coordinate Gauss-Jacobi rule on the reference tetrahedron, exact for total
// degree <= exactness.
inline QuadratureRule TetRule(int exactness)
{
  if (exactness < 0)
  {
    throw std::invalid_argument("negative quadrature exactness");
  }
  const int n = exactness / 2 + 1;
  std::vector<double> t1, w1, t2, w2, t3, w3;
  detail::GaussJacobi01(n, 0, t1, w1);
  detail::GaussJacobi01(n, 1, t2, w2);
  detail::GaussJacobi01(n, 2, t3, w3);
  QuadratureRule q;
  q.dim = 3;
  q.exactness = 2 * n - 1;
  for (int k = 0; k < n; k++)
  {
    for (int j = 0; j < n; j++)
    {
      for (int i = 0; i < n; i++)
      {
        const double z = t3[k];
        const double y = t2[j] * (1.0 - z);
        const double x = t1[i] * (1.0 - t2[j]) * (1.0 - z);
        q.points.emplace_back(x, y, z);
        q.weights.push_back(w1[i] * w2[j] * w3[k]);
      }
    }
  }
  return q;
}

inline QuadratureRule TriangleRule(int exactness)
{
  if (exactness < 0)
  {
    throw std::invalid_argument("negative quadrature exactness");
  }
  const int n = exactness / 2 + 1;
  std::vector<double> t1, w1, t2, w2;
  detail::GaussJacobi01(n, 0, t1, w1);
  detail::GaussJacobi01(n, 1, t2, w2);
  QuadratureRule q;
  q.dim = 2;
  q.exactness = 2 * n - 1;
  for (int j = 0; j < n; j++)
  {
    for (int i = 0; i < n; i++)
    {
      const double y = t2[j];
      const double x = t1[i] * (1.0 - y);
      q.points.emplace_back(x, y, 0.0);
      q.weights.push_back(w1[i] * w2[j]);
    }
  }
  return q;
}

// Gauss-Legendre on [0,1].
inline QuadratureRule LineRule(int exactness)
{
  const int n = std::max(exactness, 0) / 2 + 1;
  std::vector<double> t, w;
  detail::GaussJacobi01(n, 0, t, w);
  QuadratureRule q;
  q.dim = 1;
  q.exactness = 2 * n - 1;
  for (int i = 0; i < n; i++)
  {
    q.points.emplace_back(t[i], 0.0, 0.0);
    q.weights.push_back(w[i]);
  }
  return q;
}

}  // namespace piezoctrl

#endif  // PIEZOCTRL_QUADRATURE_HPP
