#pragma once

#include "tdlab/algo.hpp"
#include "tdlab/bounds.hpp"
#include "tdlab/errors.hpp"
#include "tdlab/experiment.hpp"
#include "tdlab/features.hpp"
#include "tdlab/geometry.hpp"
#include "tdlab/io.hpp"
#include "tdlab/mixing.hpp"
#include "tdlab/mrp.hpp"
#include "tdlab/rng.hpp"
#include "tdlab/run.hpp"
#include "tdlab/schedule.hpp"
