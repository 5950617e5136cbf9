// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_PIEZOCTRL_HPP
#define PIEZOCTRL_PIEZOCTRL_HPP

#include "piezoctrl/mesh.hpp"
#include "piezoctrl/materials.hpp"
#include "piezoctrl/quadrature.hpp"
#include "piezoctrl/lagrange.hpp"
#include "piezoctrl/fespace.hpp"
#include "piezoctrl/assembly.hpp"
#include "piezoctrl/control.hpp"
#include "piezoctrl/timestepper.hpp"
#include "piezoctrl/optimizer.hpp"
#include "piezoctrl/manufactured.hpp"
#include "piezoctrl/io.hpp"
#include "piezoctrl/oracles.hpp"
#include "piezoctrl/experiments.hpp"

#endif  // PIEZOCTRL_PIEZOCTRL_HPP
