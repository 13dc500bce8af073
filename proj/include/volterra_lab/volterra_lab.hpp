#pragma once

#include "volterra_lab/errors.hpp"
#include "volterra_lab/quadrature.hpp"
#include "volterra_lab/kernels.hpp"
#include "volterra_lab/noise.hpp"
#include "volterra_lab/monte_carlo.hpp"
#include "volterra_lab/sie_solver.hpp"
#include "volterra_lab/det_volterra.hpp"
#include "volterra_lab/duality.hpp"
#include "volterra_lab/yw_mollifiers.hpp"
#include "volterra_lab/regularity.hpp"
#include "volterra_lab/experiments.hpp"
