#pragma once

// Umbrella header.

#include "popd/core.hpp"
#include "popd/operators.hpp"
#include "popd/proxops.hpp"
#include "popd/params.hpp"
#include "popd/problem.hpp"
#include "popd/predictors.hpp"
#include "popd/engine.hpp"
#include "popd/diagnostics.hpp"
#include "popd/phantoms.hpp"
#include "popd/metrics.hpp"
#include "popd/scenarios.hpp"
#include "popd/image_io.hpp"
#include "popd/config.hpp"
#include "popd/runner.hpp"
#include "popd/selftest.hpp"
#include "popd/commands.hpp"
