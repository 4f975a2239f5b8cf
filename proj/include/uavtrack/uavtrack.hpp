#pragma once

#include "uavtrack/core.hpp"
#include "uavtrack/crlb.hpp"
#include "uavtrack/scenario.hpp"
#include "uavtrack/predictor.hpp"
#include "uavtrack/sa_repair.hpp"
#include "uavtrack/nn.hpp"
#include "uavtrack/mappo.hpp"
#include "uavtrack/config.hpp"
#include "uavtrack/rollout.hpp"
#include "uavtrack/io.hpp"
#include "uavtrack/experiment.hpp"
