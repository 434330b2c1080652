#pragma once

#include "nnepps/errors.hpp"
#include "nnepps/grid.hpp"
#include "nnepps/metrics.hpp"
#include "nnepps/operator.hpp"
#include "nnepps/oracle.hpp"
#include "nnepps/phantom.hpp"
#include "nnepps/solver.hpp"
#include "nnepps/spread.hpp"
