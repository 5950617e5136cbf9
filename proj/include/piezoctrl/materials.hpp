// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_MATERIALS_HPP
#define PIEZOCTRL_MATERIALS_HPP

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "piezoctrl/mesh.hpp"

namespace piezoctrl
{

using Matrix3 = Eigen::Matrix3d;
using Voigt6 = Eigen::Matrix<double, 6, 1>;
using Stiffness6 = Eigen::Matrix<double, 6, 6>;
using Piezo63 = Eigen::Matrix<double, 6, 3>;

// Voigt ordering (1,1) (2,2) (3,3) (2,3) (1,3) (1,2), zero-based.
inline constexpr int kVoigtRow[6] = {0, 1, 2, 1, 0, 0};
inline constexpr int kVoigtCol[6] = {0, 1, 2, 2, 2, 1};

// Strain-like Voigt vector of the symmetric part of a gradient, with engineering shear
// (factor 2 on the off-diagonal entries). Stress-like vectors carry no factor, so the
// Frobenius product of a stress and a strain is the plain dot product of their Voigt forms.
inline Voigt6 VoigtStrain(const Matrix3 &grad)
{
  Voigt6 e;
  e << grad(0, 0), grad(1, 1), grad(2, 2), grad(1, 2) + grad(2, 1), grad(0, 2) + grad(2, 0),
      grad(0, 1) + grad(1, 0);
  return e;
}

// Stress-like Voigt vector to a symmetric matrix.
inline Matrix3 VoigtStressToMatrix(const Voigt6 &s)
{
  Matrix3 m;
  m << s[0], s[5], s[4], s[5], s[1], s[3], s[4], s[3], s[2];
  return m;
}

inline Voigt6 MatrixToVoigtStress(const Matrix3 &m)
{
  Voigt6 s;
  s << m(0, 0), m(1, 1), m(2, 2), m(1, 2), m(0, 2), m(0, 1);
  return s;
}

using ScalarField = std::function<double(const Point &)>;
using VectorField = std::function<Eigen::Vector3d(const Point &)>;

struct IsotropicElasticity
{
  ScalarField lambda;
  ScalarField mu;
  // Optional spatial gradients, needed only to manufacture strong-form sources.
  VectorField grad_lambda;
  VectorField grad_mu;

  static Stiffness6 Voigt(double lambda, double mu)
  {
    Stiffness6 c = Stiffness6::Zero();
    for (int i = 0; i < 3; i++)
    {
      for (int j = 0; j < 3; j++)
      {
        c(i, j) = lambda;
      }
      c(i, i) += 2.0 * mu;
      c(i + 3, i + 3) = mu;
    }
    return c;
  }
};

//
// Coefficient fields of the piezoelectric model: density, elastic stiffness C (6x6 Voigt),
// piezoelectric tensor E (6x3 Voigt, stress-like rows) and dielectric tensor kappa.
// All fields are pure functions of position.
//
struct MaterialSet
{
  ScalarField rho;
  std::function<Stiffness6(const Point &)> stiffness;
  std::function<Piezo63(const Point &)> piezo;
  std::function<Matrix3(const Point &)> dielectric;

  // Present when C is isotropic; used by the manufactured-solution machinery.
  std::optional<IsotropicElasticity> isotropic;
  // True when E and kappa do not depend on position.
  bool constant_piezo_dielectric = false;

  // (C A) for a general (not necessarily symmetric) A, returned as a symmetric matrix.
  Matrix3 ApplyStiffness(const Point &x, const Matrix3 &a) const
  {
    return VoigtStressToMatrix(stiffness(x) * VoigtStrain(0.5 * (a + a.transpose())));
  }

  // (E b) as a symmetric matrix.
  Matrix3 ApplyPiezo(const Point &x, const Eigen::Vector3d &b) const
  {
    return VoigtStressToMatrix(piezo(x) * b);
  }

  // (E^T A), defined by (E^T A) . b = A : (E b).
  Eigen::Vector3d ApplyPiezoTranspose(const Point &x, const Matrix3 &a) const
  {
    return piezo(x).transpose() * VoigtStrain(0.5 * (a + a.transpose()));
  }
};

inline MaterialSet MakeIsotropicMaterials(ScalarField rho, IsotropicElasticity iso,
                                          const Piezo63 &e, const Matrix3 &kappa)
{
  MaterialSet m;
  m.rho = std::move(rho);
  m.stiffness = [lambda = iso.lambda, mu = iso.mu](const Point &x)
  { return IsotropicElasticity::Voigt(lambda(x), mu(x)); };
  m.piezo = [e](const Point &) { return e; };
  m.dielectric = [kappa](const Point &) { return kappa; };
  m.isotropic = std::move(iso);
  m.constant_piezo_dielectric = true;
  return m;
}

inline Piezo63 BenchmarkPiezo()
{
  Eigen::Matrix<double, 3, 6> et;
  et << 2, 2, 3, 5, 2, 3,  //
      1, 2, 6, 3, 2, 1,    //
      4, 1, 3, 3, 1, 3;
  return et.transpose();
}

inline Matrix3 BenchmarkDielectric()
{
  Matrix3 k;
  k << 19, 8, 7, 8, 19, 5, 7, 5, 17;
  return k;
}

// Non-physical benchmark coefficients used by the verification experiments:
// rho = 1 + |x| + |y|, lambda = 1 + 1/(1+|x|^2), mu = 3 + cos(xyz).
inline MaterialSet BenchmarkMaterials()
{
  IsotropicElasticity iso;
  iso.lambda = [](const Point &x) { return 1.0 + 1.0 / (1.0 + x.squaredNorm()); };
  iso.mu = [](const Point &x) { return 3.0 + std::cos(x[0] * x[1] * x[2]); };
  iso.grad_lambda = [](const Point &x) -> Eigen::Vector3d
  {
    const double d = 1.0 + x.squaredNorm();
    return -2.0 * x / (d * d);
  };
  iso.grad_mu = [](const Point &x) -> Eigen::Vector3d
  {
    const double s = -std::sin(x[0] * x[1] * x[2]);
    return Eigen::Vector3d(s * x[1] * x[2], s * x[0] * x[2], s * x[0] * x[1]);
  };
  auto rho = [](const Point &x) { return 1.0 + std::abs(x[0]) + std::abs(x[1]); };
  return MakeIsotropicMaterials(rho, std::move(iso), BenchmarkPiezo(), BenchmarkDielectric());
}

// Constant coefficients; handy for exactness tests.
inline MaterialSet ConstantMaterials(double rho, double lambda, double mu, const Piezo63 &e,
                                     const Matrix3 &kappa)
{
  IsotropicElasticity iso;
  iso.lambda = [lambda](const Point &) { return lambda; };
  iso.mu = [mu](const Point &) { return mu; };
  iso.grad_lambda = [](const Point &) { return Eigen::Vector3d::Zero().eval(); };
  iso.grad_mu = [](const Point &) { return Eigen::Vector3d::Zero().eval(); };
  return MakeIsotropicMaterials([rho](const Point &) { return rho; }, std::move(iso), e, kappa);
}

struct MaterialCheck
{
  double min_rho;
  double min_stiffness_eig;
  double min_dielectric_eig;
  double max_stiffness_asym;
  double max_dielectric_asym;
  bool Ok() const
  {
    return min_rho > 0.0 && min_stiffness_eig > 0.0 && min_dielectric_eig > 0.0 &&
           max_stiffness_asym < 1e-12 && max_dielectric_asym < 1e-12;
  }
};

// Samples the positivity and symmetry requirements at the given points.
template <typename PointRange>
MaterialCheck CheckMaterials(const MaterialSet &m, const PointRange &points)
{
  MaterialCheck chk{1e300, 1e300, 1e300, 0.0, 0.0};
  for (const Point &x : points)
  {
    chk.min_rho = std::min(chk.min_rho, m.rho(x));
    const Stiffness6 c = m.stiffness(x);
    const Matrix3 k = m.dielectric(x);
    chk.max_stiffness_asym = std::max(chk.max_stiffness_asym, (c - c.transpose()).norm());
    chk.max_dielectric_asym = std::max(chk.max_dielectric_asym, (k - k.transpose()).norm());
    Eigen::SelfAdjointEigenSolver<Stiffness6> ec(c);
    Eigen::SelfAdjointEigenSolver<Matrix3> ek(k);
    chk.min_stiffness_eig = std::min(chk.min_stiffness_eig, ec.eigenvalues().minCoeff());
    chk.min_dielectric_eig = std::min(chk.min_dielectric_eig, ek.eigenvalues().minCoeff());
  }
  return chk;
}

}  // namespace piezoctrl

#endif  // PIEZOCTRL_MATERIALS_HPP
