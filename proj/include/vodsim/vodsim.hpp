#pragma once

#include "vodsim/admission.hpp"
#include "vodsim/cache.hpp"
#include "vodsim/config.hpp"
#include "vodsim/disk_model.hpp"
#include "vodsim/engine.hpp"
#include "vodsim/errors.hpp"
#include "vodsim/metrics.hpp"
#include "vodsim/multicast.hpp"
#include "vodsim/random.hpp"
#include "vodsim/report.hpp"
#include "vodsim/workload.hpp"
