#pragma once

#include "fcdd/tensor.hpp"
#include "fcdd/backbone.hpp"
#include "fcdd/weights.hpp"
#include "fcdd/objective.hpp"
#include "fcdd/image_io.hpp"
#include "fcdd/explain.hpp"
#include "fcdd/data.hpp"
#include "fcdd/eval.hpp"
#include "fcdd/stats.hpp"
#include "fcdd/plot.hpp"
#include "fcdd/resources.hpp"
#include "fcdd/train.hpp"
