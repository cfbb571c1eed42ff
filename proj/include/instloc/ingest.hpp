#pragma once

#include "instloc/ingest/captions.hpp"
#include "instloc/ingest/detections.hpp"
#include "instloc/ingest/frames.hpp"
#include "instloc/ingest/memory_builder.hpp"
#include "instloc/ingest/png_io.hpp"
#include "instloc/ingest/synth.hpp"
