#pragma once

// Umbrella header: the whole library.

#include "conflab/commands.hpp"
#include "conflab/data.hpp"
#include "conflab/error.hpp"
#include "conflab/experiment.hpp"
#include "conflab/gradcheck.hpp"
#include "conflab/io.hpp"
#include "conflab/labels.hpp"
#include "conflab/losses.hpp"
#include "conflab/matrix.hpp"
#include "conflab/mlp.hpp"
#include "conflab/noising.hpp"
#include "conflab/rng.hpp"
#include "conflab/trainer.hpp"
