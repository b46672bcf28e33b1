#pragma once

#include "mgw/conductance.hpp"
#include "mgw/excursion.hpp"
#include "mgw/experiments.hpp"
#include "mgw/harmonic.hpp"
#include "mgw/kernel.hpp"
#include "mgw/model.hpp"
#include "mgw/optimize.hpp"
#include "mgw/parallel.hpp"
#include "mgw/rng.hpp"
#include "mgw/sampler.hpp"
#include "mgw/stats.hpp"
#include "mgw/tree.hpp"
#include "mgw/walk.hpp"
