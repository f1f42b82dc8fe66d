#pragma once

// Umbrella header: the whole library except the testing utilities
// (pslosses/testing.hpp), which pull in brute-force oracles that production
// code should not accidentally depend on.

#include "pslosses/common.hpp"
#include "pslosses/core.hpp"
#include "pslosses/propensity.hpp"
#include "pslosses/binary.hpp"
#include "pslosses/multilabel.hpp"
#include "pslosses/eval.hpp"
#include "pslosses/data.hpp"
#include "pslosses/simulate.hpp"
#include "pslosses/train.hpp"
