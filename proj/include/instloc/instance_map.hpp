#pragma once

#include "instloc/instance_map/clustering.hpp"
#include "instloc/instance_map/memory_io.hpp"
#include "instloc/instance_map/object_tuple.hpp"
