#pragma once

#include "catalog.hpp"
#include "dates.hpp"
#include "embedding.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "metric.hpp"
#include "pairs.hpp"
#include "pipeline.hpp"
#include "predictor.hpp"
#include "profiles.hpp"
#include "synth.hpp"
#include "text.hpp"
