#pragma once

// Sparse additive metamodels in tensor-product RKHS: penalized block solver,
// tuning-parameter selection, Sobol index estimation, and a simulation
// harness around the classic g-function benchmark.

#include "ranova/benchmark.hpp"
#include "ranova/errors.hpp"
#include "ranova/gfunction.hpp"
#include "ranova/gram.hpp"
#include "ranova/groups.hpp"
#include "ranova/io.hpp"
#include "ranova/kernels.hpp"
#include "ranova/model.hpp"
#include "ranova/parallel.hpp"
#include "ranova/quadrature.hpp"
#include "ranova/rng.hpp"
#include "ranova/runner.hpp"
#include "ranova/selection.hpp"
#include "ranova/sensitivity.hpp"
#include "ranova/solver.hpp"
