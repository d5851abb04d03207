#pragma once

#include "lumpvol/closed_form.hpp"
#include "lumpvol/convergence.hpp"
#include "lumpvol/error.hpp"
#include "lumpvol/kw_vortex.hpp"
#include "lumpvol/l2_metric.hpp"
#include "lumpvol/moduli_volume.hpp"
#include "lumpvol/rational_map.hpp"
#include "lumpvol/rng.hpp"
#include "lumpvol/sphere_grid.hpp"
