// Umbrella include.
#pragma once

#include "hammeta/checkpoint.hpp"
#include "hammeta/commands.hpp"
#include "hammeta/common.hpp"
#include "hammeta/dataset.hpp"
#include "hammeta/evaluation.hpp"
#include "hammeta/model.hpp"
#include "hammeta/ode.hpp"
#include "hammeta/rng.hpp"
#include "hammeta/systems.hpp"
#include "hammeta/tape.hpp"
#include "hammeta/tensor.hpp"
#include "hammeta/training.hpp"
