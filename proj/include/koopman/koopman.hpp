#pragma once

#include "koopman/core.hpp"
#include "koopman/systems.hpp"
#include "koopman/spectral.hpp"
#include "koopman/flow.hpp"
#include "koopman/eigfn.hpp"
#include "koopman/field.hpp"
#include "koopman/lyapunov.hpp"
#include "koopman/config.hpp"
#include "koopman/datasetio.hpp"
#include "koopman/acceptance.hpp"
