#pragma once

#include "instloc/eval/metrics.hpp"
#include "instloc/eval/report.hpp"
