#pragma once

#include "frl/errors.hpp"
#include "frl/factor.hpp"
#include "frl/model.hpp"
#include "frl/inference.hpp"
#include "frl/ingest.hpp"
#include "frl/learning.hpp"
#include "frl/fairness.hpp"
#include "frl/evaluation.hpp"
#include "frl/serialize.hpp"
