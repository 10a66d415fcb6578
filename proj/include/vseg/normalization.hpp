#pragma once

#include <cstddef>

namespace vseg {

// Cohort-wide intensity normalization x' = (x - mean) / std, pooled over
// every voxel of every cropped training PET.
struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;
  std::size_t cohort_size = 0;
};

}  // namespace vseg
