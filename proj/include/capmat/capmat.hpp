#pragma once

#include "analytic.hpp"
#include "capmatrix.hpp"
#include "common.hpp"
#include "dielectric.hpp"
#include "grid.hpp"
#include "network.hpp"
#include "pipeline.hpp"
#include "regularize.hpp"
#include "scene.hpp"
#include "solver.hpp"
#include "topology.hpp"

namespace capmat {
inline constexpr const char* kVersion = "0.1.0";
}
