#pragma once

// Umbrella header: local linear forests, confidence intervals, causal
// extension, and the simulation/benchmark harness.

#include "llf/causal.hpp"
#include "llf/dataset.hpp"
#include "llf/errors.hpp"
#include "llf/forest.hpp"
#include "llf/locallinear.hpp"
#include "llf/model.hpp"
#include "llf/model_io.hpp"
#include "llf/rng.hpp"
#include "llf/simbench.hpp"
#include "llf/threading.hpp"
#include "llf/tuning.hpp"
#include "llf/variance.hpp"
#include "llf/weights.hpp"
