#pragma once

#include "flowhedge/closed_form.hpp"
#include "flowhedge/core_model.hpp"
#include "flowhedge/env_service.hpp"
#include "flowhedge/error.hpp"
#include "flowhedge/evaluation.hpp"
#include "flowhedge/grid.hpp"
#include "flowhedge/hamiltonian.hpp"
#include "flowhedge/hjb.hpp"
#include "flowhedge/params.hpp"
#include "flowhedge/policy.hpp"
#include "flowhedge/policy_file.hpp"
#include "flowhedge/qvi.hpp"
#include "flowhedge/riccati.hpp"
#include "flowhedge/rng.hpp"
#include "flowhedge/simulator.hpp"
#include "flowhedge/stats.hpp"
