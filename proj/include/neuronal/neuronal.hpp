#pragma once

// Umbrella header.

#include "neuronal/alignment.hpp"
#include "neuronal/engine.hpp"
#include "neuronal/errors.hpp"
#include "neuronal/evaluate.hpp"
#include "neuronal/mask.hpp"
#include "neuronal/model.hpp"
#include "neuronal/model_io.hpp"
#include "neuronal/pipeline.hpp"
#include "neuronal/prng.hpp"
#include "neuronal/profile.hpp"
#include "neuronal/saliency.hpp"
#include "neuronal/schedules.hpp"
#include "neuronal/tensor.hpp"
#include "neuronal/tokens.hpp"
