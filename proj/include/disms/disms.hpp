#pragma once

// Umbrella header for the whole library.

#include "disms/analysis.hpp"
#include "disms/checkpoint.hpp"
#include "disms/config.hpp"
#include "disms/data.hpp"
#include "disms/disentangle.hpp"
#include "disms/encoder.hpp"
#include "disms/error.hpp"
#include "disms/metrics.hpp"
#include "disms/model.hpp"
#include "disms/multiscale.hpp"
#include "disms/objective.hpp"
#include "disms/optim.hpp"
#include "disms/rng.hpp"
#include "disms/tensor.hpp"
#include "disms/train.hpp"
