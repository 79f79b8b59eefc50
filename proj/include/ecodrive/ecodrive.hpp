#pragma once

#include "ecodrive/config.hpp"
#include "ecodrive/drive_cycle.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/experiments.hpp"
#include "ecodrive/learner.hpp"
#include "ecodrive/lookup.hpp"
#include "ecodrive/policy_io.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/reward.hpp"
#include "ecodrive/traffic.hpp"
