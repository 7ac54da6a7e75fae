#pragma once

#include "cube.hpp"
#include "cube_io.hpp"
#include "datagen.hpp"
#include "distributions.hpp"
#include "dtree.hpp"
#include "error.hpp"
#include "format.hpp"
#include "grouping.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "sampling.hpp"
#include "special.hpp"
#include "stats.hpp"
