#pragma once

// Umbrella header for the EAC layered codec library.

#include "eac/adapters.hpp"
#include "eac/adaptive_codec.hpp"
#include "eac/bytes.hpp"
#include "eac/container.hpp"
#include "eac/conv.hpp"
#include "eac/dct.hpp"
#include "eac/errors.hpp"
#include "eac/gaussian.hpp"
#include "eac/image.hpp"
#include "eac/image_codec.hpp"
#include "eac/metrics.hpp"
#include "eac/partition.hpp"
#include "eac/range_coder.hpp"
#include "eac/rng.hpp"
#include "eac/tensor.hpp"
#include "eac/tuning.hpp"
#include "eac/version.hpp"
#include "eac/video_codec.hpp"

namespace eac {}
