#pragma once

#include "ecml/cascade.hpp"
#include "ecml/error.hpp"
#include "ecml/eval.hpp"
#include "ecml/features.hpp"
#include "ecml/linalg.hpp"
#include "ecml/metrics.hpp"
#include "ecml/model_io.hpp"
