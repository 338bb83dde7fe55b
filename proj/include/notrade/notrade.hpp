#pragma once

#include "notrade/boundary_solver.hpp"
#include "notrade/diffusion.hpp"
#include "notrade/dp_oracle.hpp"
#include "notrade/errors.hpp"
#include "notrade/ode_kernel.hpp"
#include "notrade/perturbation.hpp"
#include "notrade/simulator.hpp"
#include "notrade/special_functions.hpp"
#include "notrade/version.hpp"
