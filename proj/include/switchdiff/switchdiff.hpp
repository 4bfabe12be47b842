#pragma once

#include "switchdiff/version.hpp"
#include "switchdiff/core.hpp"
#include "switchdiff/quadrature.hpp"
#include "switchdiff/model.hpp"
#include "switchdiff/spectral.hpp"
#include "switchdiff/functionals.hpp"
#include "switchdiff/montecarlo.hpp"
