#pragma once

#include "instloc/fusion/attention.hpp"
#include "instloc/fusion/batch.hpp"
#include "instloc/fusion/grad_check.hpp"
#include "instloc/fusion/losses.hpp"
#include "instloc/fusion/model.hpp"
#include "instloc/fusion/params.hpp"
#include "instloc/fusion/toy.hpp"
