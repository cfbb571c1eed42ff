#pragma once

#include "instloc/localizer/assignment.hpp"
#include "instloc/localizer/config.hpp"
#include "instloc/localizer/localize.hpp"
#include "instloc/localizer/registration.hpp"
