#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "vseg/case.hpp"
#include "vseg/normalization.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

// Spacing (mm) every volume must have before cropping.
inline constexpr double kWorkingSpacingMm = 2.0;

// Position of a crop cube in the original grid. `start` may be negative or
// run past the far border when the volume is smaller than the cube; those
// voxels are padding (value 0).
struct CropOffset {
  std::array<long, 3> start{0, 0, 0};
  std::size_t size = 64;
  Index3 original_dims{0, 0, 0};
  Vec3 original_origin{0.0, 0.0, 0.0};
  bool padded = false;
};

struct CroppedCase {
  CaseRecord record;
  CropOffset offset;
};

// Throws PipelineError unless every axis has 2 mm spacing.
void require_working_spacing(const Volume& volume, const std::string& what);

// Cube of edge `size` centred on the prostate-mask centroid and clamped to
// the volume. Throws PipelineError for an empty prostate or wrong spacing.
CropOffset plan_crop(const Volume& prostate, std::size_t size);
Volume crop_volume(const Volume& volume, const CropOffset& offset);
CroppedCase crop_to_roi(const CaseRecord& record, std::size_t size = 64);
// Places a cropped volume back on the original grid; outside voxels are 0.
Volume uncrop(const Volume& cropped, const CropOffset& offset);

// Pooled mean and population std over every voxel of every crop.
// Throws PipelineError for no crops or zero std.
NormalizationStats fit_normalization(std::span<const Volume> crops);
Volume apply_normalization(const Volume& volume, const NormalizationStats& stats);

struct CohortSplit {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> eval;   // ascending
};

// Seeded shuffle; eval size round(fraction * n) clamped to [1, n - 1].
CohortSplit split_cohort(std::size_t case_count, double eval_fraction, std::uint64_t seed);

// Voxels inside the prostate with SUV >= fraction * max SUV in the prostate.
Volume threshold_gtv30(const Volume& pet, const Volume& prostate, double fraction = 0.30);

// Drops label voxels outside the prostate.
Volume mask_by(const Volume& mask, const Volume& prostate);

// [1, 2, z, y, x]: normalized PET and the prostate mask.
Tensor make_input(const Volume& pet, const Volume& prostate, const NormalizationStats& stats);
// [1, 1, z, y, x]
LabelTensor make_labels(const Volume& mask);
// Mask volume on the grid of `reference` from a [1, 1, z, y, x] label tensor.
Volume labels_to_volume(const LabelTensor& labels, const Volume& reference);

}  // namespace vseg
