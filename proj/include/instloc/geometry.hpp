#pragma once

#include "instloc/geometry/camera.hpp"
#include "instloc/geometry/cloud_io.hpp"
#include "instloc/geometry/features.hpp"
#include "instloc/geometry/kdtree.hpp"
#include "instloc/geometry/point_cloud.hpp"
#include "instloc/geometry/pose.hpp"
#include "instloc/geometry/voxel.hpp"
