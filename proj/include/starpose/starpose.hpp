#pragma once

#include "starpose/alignment.hpp"
#include "starpose/dataset.hpp"
#include "starpose/geometry.hpp"
#include "starpose/harness.hpp"
#include "starpose/heatmap.hpp"
#include "starpose/linalg.hpp"
#include "starpose/metrics.hpp"
#include "starpose/report.hpp"
#include "starpose/rng.hpp"
#include "starpose/svd3.hpp"
