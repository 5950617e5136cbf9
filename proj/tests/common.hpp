// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the test binaries.

#ifndef PIEZOCTRL_TESTS_COMMON_HPP
#define PIEZOCTRL_TESTS_COMMON_HPP

#include <memory>
#include <random>

#include "piezoctrl/piezoctrl.hpp"

namespace piezoctrl::fixtures
{

// Faces at y = 0 and y = 1 clamped.
inline bool ClampY(const Point &c) { return c[1] < 1e-12 || c[1] > 1.0 - 1e-12; }
inline bool ClampXYZ(const Point &c) { return c[0] * c[1] * c[2] < 1e-12; }
inline bool NoClamp(const Point &) { return false; }

inline Eigen::VectorXd RandomVector(int n, std::mt19937 &rng)
{
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; i++)
  {
    v[i] = d(rng);
  }
  return v;
}

inline Eigen::MatrixXd RandomMatrix(int r, int c, std::mt19937 &rng)
{
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; i++)
  {
    for (int j = 0; j < c; j++)
    {
      m(i, j) = d(rng);
    }
  }
  return m;
}

// Zero-mean control that is a sum of smooth time profiles with random face amplitudes.
inline ControlTrajectory SmoothRandomControl(const ZMetric &metric, std::mt19937 &rng,
                                             double scale = 1.0)
{
  ControlTrajectory z = metric.Zero();
  const Eigen::MatrixXd amp = RandomMatrix(metric.NumFaces(), 3, rng);
  const double T = metric.Dt() * metric.Steps();
  for (int n = 0; n <= metric.Steps(); n++)
  {
    const double s = n * metric.Dt() / T;
    const Eigen::Vector3d prof(std::sin(3.0 * s), s * s, std::sin(7.0 * s) * s);
    z.values.col(n) = scale * amp * prof;
  }
  metric.SubtractMean(z);
  return z;
}

}  // namespace piezoctrl::fixtures

#endif  // PIEZOCTRL_TESTS_COMMON_HPP
