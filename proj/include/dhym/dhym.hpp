#ifndef DHYM_DHYM_HPP
#define DHYM_DHYM_HPP

// Everything in one include.

#include "dhym/calibration.hpp"
#include "dhym/chart.hpp"
#include "dhym/error.hpp"
#include "dhym/fiber_average.hpp"
#include "dhym/form_algebra.hpp"
#include "dhym/harness.hpp"
#include "dhym/hermitian_core.hpp"
#include "dhym/intersection_ring.hpp"
#include "dhym/linalg.hpp"
#include "dhym/random.hpp"
#include "dhym/regularized_max.hpp"
#include "dhym/ring_io.hpp"
#include "dhym/torus_solver.hpp"

#endif
