#pragma once

#include "basis.hpp"
#include "boundaries.hpp"
#include "censoring.hpp"
#include "design.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "information.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "models.hpp"
#include "normal.hpp"
#include "rng.hpp"
#include "simulation.hpp"
#include "trial_data.hpp"
