#pragma once

// Convenience include for the whole library.

#include "spectraforge/augment.hpp"
#include "spectraforge/calibration.hpp"
#include "spectraforge/common.hpp"
#include "spectraforge/cube.hpp"
#include "spectraforge/geometry.hpp"
#include "spectraforge/losses.hpp"
#include "spectraforge/network.hpp"
#include "spectraforge/png_io.hpp"
#include "spectraforge/registration.hpp"
#include "spectraforge/rng.hpp"
#include "spectraforge/simulate.hpp"
#include "spectraforge/spectral.hpp"
#include "spectraforge/spotmask.hpp"
#include "spectraforge/tensor.hpp"
#include "spectraforge/training.hpp"
