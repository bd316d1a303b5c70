#pragma once

#include "atlas/error.hpp"
#include "atlas/hash.hpp"
#include "atlas/random.hpp"
#include "atlas/io.hpp"
#include "atlas/core.hpp"
#include "atlas/http.hpp"
#include "atlas/embed.hpp"
#include "atlas/cluster.hpp"
#include "atlas/profile.hpp"
#include "atlas/traj.hpp"
#include "atlas/reward.hpp"
#include "atlas/calculator.hpp"
#include "atlas/dataset.hpp"
#include "atlas/sim.hpp"
#include "atlas/env.hpp"
#include "atlas/policy.hpp"
#include "atlas/eval.hpp"
