#pragma once

#include "vmsfem/assembly.hpp"
#include "vmsfem/bench.hpp"
#include "vmsfem/diagnostics.hpp"
#include "vmsfem/errors.hpp"
#include "vmsfem/fe_basis.hpp"
#include "vmsfem/fe_space.hpp"
#include "vmsfem/linsolve.hpp"
#include "vmsfem/lps_projection.hpp"
#include "vmsfem/mesh.hpp"
#include "vmsfem/parallel.hpp"
#include "vmsfem/quadrature.hpp"
#include "vmsfem/stab_coeffs.hpp"
#include "vmsfem/timestepper.hpp"
