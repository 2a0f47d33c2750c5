#pragma once

#include "thicken/errors.hpp"
#include "thicken/rational.hpp"
#include "thicken/index.hpp"
#include "thicken/stream.hpp"
#include "thicken/lazy_real.hpp"
#include "thicken/density.hpp"
#include "thicken/extractor.hpp"
#include "thicken/corrector.hpp"
#include "thicken/thickener.hpp"
#include "thicken/poisson.hpp"
#include "thicken/distinguisher.hpp"
#include "thicken/lab/stats.hpp"
#include "thicken/lab/enumerate.hpp"
#include "thicken/lab/report.hpp"
#include "thicken/lab/experiments.hpp"
