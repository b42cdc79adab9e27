#pragma once

#include "rssp/error.hpp"
#include "rssp/rng.hpp"
#include "rssp/instance.hpp"
#include "rssp/beam.hpp"
#include "rssp/reconstruct.hpp"
#include "rssp/mitm.hpp"
#include "rssp/variants.hpp"
#include "rssp/baselines.hpp"
#include "rssp/experiments.hpp"
