#pragma once

#include "uatrpo/error.hpp"
#include "uatrpo/rng.hpp"
#include "uatrpo/linalg.hpp"
#include "uatrpo/mlp.hpp"
#include "uatrpo/policy.hpp"
#include "uatrpo/envs.hpp"
#include "uatrpo/estimation.hpp"
#include "uatrpo/trust_region.hpp"
#include "uatrpo/optimizers.hpp"
#include "uatrpo/harness.hpp"
#include "uatrpo/plots.hpp"
#include "uatrpo/config.hpp"
#include "uatrpo/selftest.hpp"
