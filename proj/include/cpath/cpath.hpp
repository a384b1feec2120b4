#pragma once

// Same-class path finding between inputs of a feed-forward classifier, in
// input space and in hidden-layer representation spaces.

#include "cpath/error.hpp"
#include "cpath/tensor.hpp"
#include "cpath/diffcore.hpp"
#include "cpath/adam.hpp"
#include "cpath/dataset.hpp"
#include "cpath/classifier.hpp"
#include "cpath/checkpoint.hpp"
#include "cpath/pathfind.hpp"
#include "cpath/decoder.hpp"
#include "cpath/config.hpp"
#include "cpath/experiment.hpp"
