#pragma once

#include "pnsis/dataset_io.hpp"
#include "pnsis/ensemble.hpp"
#include "pnsis/gsd.hpp"
#include "pnsis/harness.hpp"
#include "pnsis/metrics.hpp"
#include "pnsis/model.hpp"
#include "pnsis/objective.hpp"
#include "pnsis/pmp.hpp"
#include "pnsis/synthgen.hpp"
