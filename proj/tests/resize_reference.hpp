#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "solo/image.hpp"

namespace solo::test {

// Independent resize oracle: a literal transcription of the published
// resize routine, kept in floating point with trunc-toward-zero conversions
// exactly where the original converts to int. The production implementation
// uses integer arithmetic and must agree with this on every input.
inline ImageDims resize_reference(ImageDims dims, std::int64_t patch_size,
                                  std::int64_t max_resolution) {
  const double l1 = static_cast<double>(dims.width);
  const double l2 = static_cast<double>(dims.height);
  const double p = static_cast<double>(patch_size);

  double short_side, long_side;
  if (l2 <= l1) {
    short_side = l2;
    long_side = l1;
  } else {
    short_side = l1;
    long_side = l2;
  }

  const double requested_new_long =
      std::min(std::trunc(long_side / p + 1.0) * p, static_cast<double>(max_resolution));
  const double new_long = requested_new_long;
  double new_short = std::trunc(new_long * short_side / long_side);
  new_short = std::trunc(new_short / p + 1.0) * p;

  if (l2 <= l1) {
    return {static_cast<std::int64_t>(new_long), static_cast<std::int64_t>(new_short)};
  }
  return {static_cast<std::int64_t>(new_short), static_cast<std::int64_t>(new_long)};
}

}  // namespace solo::test
