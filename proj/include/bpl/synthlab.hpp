#pragma once

#include "bpl/synthlab/benchmark.hpp"
#include "bpl/synthlab/learner.hpp"
#include "bpl/synthlab/metrics.hpp"
#include "bpl/synthlab/noise.hpp"
#include "bpl/synthlab/scene.hpp"
#include "bpl/synthlab/selftrain.hpp"
