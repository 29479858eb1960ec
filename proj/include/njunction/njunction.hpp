#pragma once

#include "errors.hpp"
#include "potential.hpp"
#include "spectral.hpp"
#include "descent.hpp"
#include "connect1d.hpp"
#include "fiber.hpp"
#include "disk2d.hpp"
#include "analysis.hpp"
#include "config.hpp"
#include "svg.hpp"
#include "pipeline.hpp"
