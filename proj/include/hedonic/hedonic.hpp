#pragma once

#include "hedonic/core_types.hpp"
#include "hedonic/convoluted.hpp"
#include "hedonic/evaluation.hpp"
#include "hedonic/feature_store.hpp"
#include "hedonic/linear_models.hpp"
#include "hedonic/mlp.hpp"
#include "hedonic/report.hpp"
#include "hedonic/serialization.hpp"
#include "hedonic/synthetic.hpp"
