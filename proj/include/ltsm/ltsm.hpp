#pragma once

#include "ltsm/backbone.hpp"
#include "ltsm/config.hpp"
#include "ltsm/error.hpp"
#include "ltsm/evalkit.hpp"
#include "ltsm/experiment.hpp"
#include "ltsm/prompt.hpp"
#include "ltsm/rng.hpp"
#include "ltsm/runner.hpp"
#include "ltsm/series.hpp"
#include "ltsm/tokenizer.hpp"
#include "ltsm/trainer.hpp"
