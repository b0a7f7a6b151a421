#pragma once

#include "nsg/clarke.hpp"
#include "nsg/geometry.hpp"
#include "nsg/harness.hpp"
#include "nsg/manifolds.hpp"
#include "nsg/matrix_hull.hpp"
#include "nsg/min_norm.hpp"
#include "nsg/mollify.hpp"
#include "nsg/parallel.hpp"
#include "nsg/rng.hpp"
#include "nsg/sphere_maps.hpp"
#include "nsg/version.hpp"
