#pragma once

// Everything except the exact oracle, which needs Eigen and GMP.
#include "analytics.hpp"
#include "configuration.hpp"
#include "dsl.hpp"
#include "engine.hpp"
#include "io.hpp"
#include "library.hpp"
#include "pool.hpp"
#include "probability.hpp"
#include "protocol.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "stats.hpp"
