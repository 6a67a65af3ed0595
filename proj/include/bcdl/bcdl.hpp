#pragma once

#include "distributions.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "gibbs.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "oracles.hpp"
#include "predictor.hpp"
#include "rng.hpp"
