#pragma once

#include "arcflux/bench.hpp"
#include "arcflux/checkpoint.hpp"
#include "arcflux/common.hpp"
#include "arcflux/config.hpp"
#include "arcflux/data.hpp"
#include "arcflux/fas.hpp"
#include "arcflux/metrics.hpp"
#include "arcflux/model.hpp"
#include "arcflux/pipeline.hpp"
#include "arcflux/ssm.hpp"
#include "arcflux/training.hpp"
