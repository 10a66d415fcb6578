#pragma once

#include <cstdint>

#include "vseg/case.hpp"

namespace vseg {

// Synthetic PET case: warm body background, a prostate ellipsoid with
// 1-3 hot spherical lesions inside it, a hot bladder sphere just superior to
// the gland, Gaussian PSF blur and uptake-dependent noise. Geometry is
// jittered from `seed`; everything is deterministic given the spec.
struct PhantomSpec {
  std::uint64_t seed = 0;
  Index3 dims{64, 64, 64};
  Vec3 spacing{2.0, 2.0, 2.0};
  Vec3 prostate_axes_mm{22.0, 18.0, 16.0};  // semi-axes (x, y, z)
  double prostate_axis_jitter = 0.12;        // relative
  double center_jitter_mm = 6.0;
  std::size_t lesion_count_min = 1;
  std::size_t lesion_count_max = 3;
  double lesion_radius_min_mm = 5.0;
  double lesion_radius_max_mm = 9.0;
  double lesion_suv_min = 8.0;
  double lesion_suv_max = 16.0;
  double background_suv = 1.0;
  double prostate_suv = 2.5;
  double bladder_suv = 25.0;
  double bladder_radius_mm = 18.0;
  double psf_fwhm_mm = 5.0;
  // Noise sd = noise_level * sqrt(SUV).
  double noise_level = 0.1;

  void validate() const;
};

// gtv_label holds the pre-blur lesion voxels; histo_ref equals gtv_label.
// Throws PipelineError when lesions cannot be placed inside the prostate.
CaseRecord generate_phantom(const PhantomSpec& spec, std::string id = "phantom");

// Separable Gaussian blur (sigma in mm per axis, clamped borders).
Volume gaussian_blur(const Volume& volume, const Vec3& sigma_mm);

}  // namespace vseg
