#pragma once

#include "signmf/diagnostics.hpp"
#include "signmf/dispersion.hpp"
#include "signmf/io.hpp"
#include "signmf/likelihood.hpp"
#include "signmf/model_selection.hpp"
#include "signmf/nmf.hpp"
#include "signmf/parallel.hpp"
#include "signmf/pipeline.hpp"
#include "signmf/rng.hpp"
#include "signmf/simulation.hpp"
#include "signmf/special_functions.hpp"
#include "signmf/types.hpp"
