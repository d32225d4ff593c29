#pragma once

#include "prebim/types.hpp"
#include "prebim/moments.hpp"
#include "prebim/estimators.hpp"
#include "prebim/discovery.hpp"
#include "prebim/direction.hpp"
#include "prebim/pipeline.hpp"
#include "prebim/simulator.hpp"
#include "prebim/bench.hpp"
#include "prebim/io.hpp"
