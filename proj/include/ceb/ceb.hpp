#pragma once

#include "ceb/classifier.hpp"
#include "ceb/error.hpp"
#include "ceb/grid.hpp"
#include "ceb/labels.hpp"
#include "ceb/matching.hpp"
#include "ceb/metrics.hpp"
#include "ceb/pipeline.hpp"
#include "ceb/raster_io.hpp"
#include "ceb/region_graph.hpp"
#include "ceb/seeds.hpp"
#include "ceb/signature.hpp"
#include "ceb/synth.hpp"
#include "ceb/temporal.hpp"
#include "ceb/watershed.hpp"
