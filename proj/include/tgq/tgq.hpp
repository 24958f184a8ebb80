#pragma once

#include "tgq/errors.hpp"
#include "tgq/chart.hpp"
#include "tgq/geodesic.hpp"
#include "tgq/groupoid.hpp"
#include "tgq/grids.hpp"
#include "tgq/fourier.hpp"
#include "tgq/scheme.hpp"
#include "tgq/operator.hpp"
#include "tgq/quantize.hpp"
#include "tgq/symbols.hpp"
#include "tgq/rates.hpp"
#include "tgq/checks.hpp"
#include "tgq/harness.hpp"
