#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

enum class Interpolation { nearest, trilinear, bspline3, gaussian };

std::optional<Interpolation> parse_interpolation(std::string_view name);
const char* interpolation_name(Interpolation method);

struct ResampleSpec {
  Vec3 target_spacing{2.0, 2.0, 2.0};
  Interpolation method = Interpolation::trilinear;
  // Gaussian kernel sigma in mm = factor * target spacing, per axis.
  double gaussian_sigma_factor = 0.5;
};

// Point sampler over one volume. Points outside the sampled domain are
// clamped to it (replicate border). bspline3 is interpolating: coefficients
// are prefiltered once at construction (mirror boundary).
class Interpolator {
 public:
  Interpolator(const Volume& volume, Interpolation method, Vec3 gaussian_sigma_mm = {1.0, 1.0, 1.0});

  double at(const Vec3& point_mm) const;

  struct Tap {
    std::size_t index;
    double weight;
  };
  // Separable taps along one axis for continuous index u (voxel units).
  std::vector<Tap> taps(int axis, double u) const;
  double combine(const std::vector<Tap>& tx, const std::vector<Tap>& ty, const std::vector<Tap>& tz) const;

 private:
  const Volume& volume_;
  Interpolation method_;
  Vec3 sigma_mm_;
  std::vector<double> coefficients_;  // bspline3 only
};

double interpolate_at(const Volume& volume, const Vec3& point_mm, Interpolation method,
                      Vec3 gaussian_sigma_mm = {1.0, 1.0, 1.0});

// Output grid: dims = ceil(n * spacing / target_spacing); the field of view
// starts where the input's does, so output voxel k has its center at
//   origin + (k + 0.5) * target_spacing - 0.5 * input_spacing.
Index3 resampled_dims(const Volume& volume, const Vec3& target_spacing);
Vec3 resampled_origin(const Volume& volume, const Vec3& target_spacing);

// Throws ConfigError when a mask is resampled with anything but nearest.
Volume resample(const Volume& volume, const ResampleSpec& spec);

// In-place cubic B-spline prefilter of a 1-D signal (mirror boundary, pole
// sqrt(3) - 2) turning samples into interpolation coefficients.
void bspline3_prefilter(std::vector<double>& signal);

}  // namespace vseg
