#pragma once

// Umbrella header for the first-exit simulation and asymptotics toolkit.

#include "jexit/analysis.hpp"
#include "jexit/conjugation.hpp"
#include "jexit/errors.hpp"
#include "jexit/io.hpp"
#include "jexit/linalg.hpp"
#include "jexit/model.hpp"
#include "jexit/rng.hpp"
#include "jexit/simulate.hpp"
#include "jexit/stats.hpp"
#include "jexit/theory.hpp"
