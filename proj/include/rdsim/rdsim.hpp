#pragma once

// Umbrella header.

#include "rdsim/assembly.hpp"
#include "rdsim/commands.hpp"
#include "rdsim/config.hpp"
#include "rdsim/dense.hpp"
#include "rdsim/diagnostics.hpp"
#include "rdsim/epi.hpp"
#include "rdsim/error.hpp"
#include "rdsim/expression.hpp"
#include "rdsim/grid.hpp"
#include "rdsim/integrator.hpp"
#include "rdsim/io.hpp"
#include "rdsim/linear_solve.hpp"
#include "rdsim/multinomial.hpp"
#include "rdsim/reaction.hpp"
#include "rdsim/sparse.hpp"
#include "rdsim/theta_search.hpp"
