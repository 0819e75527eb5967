#pragma once

#include "gangsim/error.hpp"
#include "gangsim/rng.hpp"
#include "gangsim/resources.hpp"
#include "gangsim/cluster.hpp"
#include "gangsim/workload.hpp"
#include "gangsim/store.hpp"
#include "gangsim/lifecycle.hpp"
#include "gangsim/scheduler.hpp"
#include "gangsim/engine.hpp"
#include "gangsim/metrics.hpp"
#include "gangsim/scenario.hpp"
#include "gangsim/experiments.hpp"
