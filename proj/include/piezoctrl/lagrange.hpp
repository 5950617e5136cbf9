// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_LAGRANGE_HPP
#define PIEZOCTRL_LAGRANGE_HPP

#include <array>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace piezoctrl
{

//
// P_k Lagrange basis on a tetrahedron with equispaced nodes, written in barycentric
// coordinates. Node alpha (|alpha| = k) has basis prod_j P_{alpha_j}(lambda_j), where
// P_a(l) = prod_{m<a} (k l - m)/(m + 1).
//
class LagrangeTet
{
public:
  explicit LagrangeTet(int degree) : k_(degree)
  {
    if (degree < 1)
    {
      throw std::invalid_argument("Lagrange degree must be >= 1");
    }
    for (int a3 = 0; a3 <= k_; a3++)
    {
      for (int a2 = 0; a2 <= k_ - a3; a2++)
      {
        for (int a1 = 0; a1 <= k_ - a3 - a2; a1++)
        {
          nodes_.push_back({k_ - a1 - a2 - a3, a1, a2, a3});
        }
      }
    }
  }

  int Degree() const { return k_; }
  int NumNodes() const { return static_cast<int>(nodes_.size()); }
  const std::array<int, 4> &Node(int i) const { return nodes_[i]; }

  // Values at barycentric coordinates l.
  void Eval(const std::array<double, 4> &l, Eigen::VectorXd &values) const
  {
    values.resize(NumNodes());
    for (int i = 0; i < NumNodes(); i++)
    {
      double v = 1.0;
      for (int j = 0; j < 4; j++)
      {
        v *= Factor(nodes_[i][j], l[j]);
      }
      values[i] = v;
    }
  }

  // Values and derivatives with respect to the four barycentric coordinates (n x 4).
  void EvalWithBaryDerivs(const std::array<double, 4> &l, Eigen::VectorXd &values,
                          Eigen::MatrixXd &dvalues) const
  {
    values.resize(NumNodes());
    dvalues.resize(NumNodes(), 4);
    for (int i = 0; i < NumNodes(); i++)
    {
      std::array<double, 4> f, df;
      for (int j = 0; j < 4; j++)
      {
        FactorAndDeriv(nodes_[i][j], l[j], f[j], df[j]);
      }
      values[i] = f[0] * f[1] * f[2] * f[3];
      dvalues(i, 0) = df[0] * f[1] * f[2] * f[3];
      dvalues(i, 1) = f[0] * df[1] * f[2] * f[3];
      dvalues(i, 2) = f[0] * f[1] * df[2] * f[3];
      dvalues(i, 3) = f[0] * f[1] * f[2] * df[3];
    }
  }

private:
  int k_;
  std::vector<std::array<int, 4>> nodes_;

  double Factor(int a, double l) const
  {
    double v = 1.0;
    for (int m = 0; m < a; m++)
    {
      v *= (k_ * l - m) / (m + 1.0);
    }
    return v;
  }

  void FactorAndDeriv(int a, double l, double &v, double &dv) const
  {
    v = 1.0;
    dv = 0.0;
    for (int m = 0; m < a; m++)
    {
      const double g = (k_ * l - m) / (m + 1.0);
      const double dg = k_ / (m + 1.0);
      dv = dv * g + v * dg;
      v *= g;
    }
  }
};

}  // namespace piezoctrl

#endif  // PIEZOCTRL_LAGRANGE_HPP
