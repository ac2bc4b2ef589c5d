#pragma once

// Umbrella header for the whole library.

#include "biweibull/cli.hpp"
#include "biweibull/data.hpp"
#include "biweibull/estimation.hpp"
#include "biweibull/likelihood.hpp"
#include "biweibull/model.hpp"
#include "biweibull/moments.hpp"
#include "biweibull/numerics.hpp"
#include "biweibull/simulation.hpp"
#include "biweibull/version.hpp"
