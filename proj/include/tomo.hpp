#pragma once

#include "tomo/cf_gmm.hpp"
#include "tomo/config.hpp"
#include "tomo/errors.hpp"
#include "tomo/estimators.hpp"
#include "tomo/gaussian.hpp"
#include "tomo/identifiability.hpp"
#include "tomo/io.hpp"
#include "tomo/linalg.hpp"
#include "tomo/metrics.hpp"
#include "tomo/optimize.hpp"
#include "tomo/rng.hpp"
#include "tomo/simplex_qp.hpp"
#include "tomo/simulate.hpp"
#include "tomo/topology.hpp"
#include "tomo/version.hpp"
