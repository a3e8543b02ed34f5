#pragma once

#include "octopus/core.hpp"
#include "octopus/config.hpp"
#include "octopus/io.hpp"
#include "octopus/ml.hpp"
#include "octopus/morphology.hpp"
#include "octopus/parallel.hpp"
#include "octopus/phantom.hpp"
#include "octopus/pipeline.hpp"
#include "octopus/plaque.hpp"
#include "octopus/png.hpp"
#include "octopus/preprocess.hpp"
#include "octopus/quant.hpp"
#include "octopus/raster.hpp"
#include "octopus/registration.hpp"
#include "octopus/service.hpp"
#include "octopus/stent.hpp"
#include "octopus/training.hpp"
