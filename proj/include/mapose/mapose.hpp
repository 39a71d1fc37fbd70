#pragma once

#include "mapose/core.hpp"
#include "mapose/dataset.hpp"
#include "mapose/evaluate.hpp"
#include "mapose/flow.hpp"
#include "mapose/geometry.hpp"
#include "mapose/heatmap.hpp"
#include "mapose/image.hpp"
#include "mapose/metrics.hpp"
#include "mapose/pnp.hpp"
#include "mapose/predict.hpp"
#include "mapose/simulate.hpp"
