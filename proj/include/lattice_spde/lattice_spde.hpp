#pragma once

#include "lattice_spde/convergence_lab.hpp"
#include "lattice_spde/errors.hpp"
#include "lattice_spde/io.hpp"
#include "lattice_spde/green_kernel.hpp"
#include "lattice_spde/lattice_core.hpp"
#include "lattice_spde/mollifier.hpp"
#include "lattice_spde/noise_field.hpp"
#include "lattice_spde/spde_solver.hpp"
