#include "vseg/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "vseg/error.hpp"
#include "vseg/random.hpp"

namespace vseg {

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] == 0 || !(spacing[a] > 0.0) || !(prostate_axes_mm[a] > 0.0)) {
      throw ConfigError("phantom: dims, spacing and prostate axes must be positive");
    }
  }
  if (lesion_count_min < 1 || lesion_count_max < lesion_count_min) {
    throw ConfigError("phantom: lesion count range must satisfy 1 <= min <= max");
  }
  if (!(lesion_radius_min_mm > 0.0) || lesion_radius_max_mm < lesion_radius_min_mm) {
    throw ConfigError("phantom: invalid lesion radius range");
  }
  if (lesion_suv_max < lesion_suv_min || psf_fwhm_mm < 0.0 || noise_level < 0.0) {
    throw ConfigError("phantom: invalid lesion SUV, PSF or noise settings");
  }
}

Volume gaussian_blur(const Volume& volume, const Vec3& sigma_mm) {
  Volume out = volume;
  std::vector<double> line, kernel;
  for (int a = 0; a < 3; ++a) {
    const double sigma = sigma_mm[a] / volume.spacing[a];
    if (sigma <= 0.0) continue;
    const long radius = static_cast<long>(std::ceil(3.0 * sigma));
    kernel.resize(2 * radius + 1);
    double total = 0.0;
    for (long k = -radius; k <= radius; ++k) {
      kernel[k + radius] = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
      total += kernel[k + radius];
    }
    for (auto& k : kernel) k /= total;
    const auto [nx, ny, nz] = volume.dims;
    const std::size_t n = volume.dims[a];
    const std::size_t stride = a == 0 ? 1 : (a == 1 ? nx : nx * ny);
    const std::size_t lines = nx * ny * nz / n;
    line.resize(n);
    for (std::size_t l = 0; l < lines; ++l) {
      std::size_t base;
      if (a == 0) base = l * nx;
      else if (a == 1) base = (l / nx) * nx * ny + l % nx;
      else base = l;
      for (std::size_t i = 0; i < n; ++i) line[i] = out.data[base + i * stride];
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k) {
          const long j = std::clamp(static_cast<long>(i) + k, 0L, static_cast<long>(n) - 1);
          acc += kernel[k + radius] * line[static_cast<std::size_t>(j)];
        }
        out.data[base + i * stride] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

CaseRecord generate_phantom(const PhantomSpec& spec, std::string id) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "phantom"));
  const auto [nx, ny, nz] = spec.dims;
  Vec3 center{}, axes{};
  for (int a = 0; a < 3; ++a) {
    const double mid = 0.5 * static_cast<double>(spec.dims[a] - 1) * spec.spacing[a];
    center[a] = mid + rng.uniform(-spec.center_jitter_mm, spec.center_jitter_mm);
    axes[a] = spec.prostate_axes_mm[a] * (1.0 + rng.uniform(-spec.prostate_axis_jitter, spec.prostate_axis_jitter));
  }
  auto position = [&](std::size_t x, std::size_t y, std::size_t z) {
    return Vec3{static_cast<double>(x) * spec.spacing[0], static_cast<double>(y) * spec.spacing[1],
                static_cast<double>(z) * spec.spacing[2]};
  };
  auto in_prostate = [&](const Vec3& p) {
    double r = 0.0;
    for (int a = 0; a < 3; ++a) r += std::pow((p[a] - center[a]) / axes[a], 2);
    return r <= 1.0;
  };

  CaseRecord c;
  c.id = std::move(id);
  c.pet = Volume::zeros(spec.dims, spec.spacing, {0.0, 0.0, 0.0}, VolumeKind::pet);
  c.prostate = Volume::mask_like(c.pet);
  Volume gtv = Volume::mask_like(c.pet);
  std::vector<double> activity(c.pet.voxel_count(), spec.background_suv);

  // Bladder: superior to the gland, slightly anterior (smaller y).
  const Vec3 bladder{center[0], center[1] - 0.3 * axes[1], center[2] + axes[2] + spec.bladder_radius_mm + 2.0};
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const Vec3 p = position(x, y, z);
        const std::size_t i = c.pet.index(x, y, z);
        if (in_prostate(p)) {
          c.prostate.data[i] = 1.0f;
          activity[i] = spec.prostate_suv;
        }
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) d2 += (p[a] - bladder[a]) * (p[a] - bladder[a]);
        if (d2 <= spec.bladder_radius_mm * spec.bladder_radius_mm && !in_prostate(p)) activity[i] = spec.bladder_suv;
      }
  if (count_nonzero(c.prostate) == 0) throw PipelineError("phantom: prostate ellipsoid does not cover any voxel");

  const std::size_t lesions = spec.lesion_count_min + rng.below(spec.lesion_count_max - spec.lesion_count_min + 1);
  for (std::size_t l = 0; l < lesions; ++l) {
    const double radius = rng.uniform(spec.lesion_radius_min_mm, spec.lesion_radius_max_mm);
    const double suv = rng.uniform(spec.lesion_suv_min, spec.lesion_suv_max);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      Vec3 lc{};
      for (int a = 0; a < 3; ++a) lc[a] = center[a] + rng.uniform(-axes[a], axes[a]);
      // Every voxel of the sphere must lie inside the gland and the grid.
      std::vector<std::size_t> voxels;
      bool inside = true;
      long lo[3], hi[3];
      for (int a = 0; a < 3; ++a) {
        lo[a] = static_cast<long>(std::floor((lc[a] - radius) / spec.spacing[a]));
        hi[a] = static_cast<long>(std::ceil((lc[a] + radius) / spec.spacing[a]));
      }
      for (long z = lo[2]; z <= hi[2] && inside; ++z)
        for (long y = lo[1]; y <= hi[1] && inside; ++y)
          for (long x = lo[0]; x <= hi[0] && inside; ++x) {
            const Vec3 p{static_cast<double>(x) * spec.spacing[0], static_cast<double>(y) * spec.spacing[1],
                         static_cast<double>(z) * spec.spacing[2]};
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) d2 += (p[a] - lc[a]) * (p[a] - lc[a]);
            if (d2 > radius * radius) continue;
            if (x < 0 || y < 0 || z < 0 || x >= static_cast<long>(nx) || y >= static_cast<long>(ny) ||
                z >= static_cast<long>(nz) || !in_prostate(p)) {
              inside = false;
              break;
            }
            voxels.push_back(c.pet.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                                         static_cast<std::size_t>(z)));
          }
      if (!inside || voxels.empty()) continue;
      for (auto i : voxels) {
        gtv.data[i] = 1.0f;
        activity[i] = suv;
      }
      placed = true;
    }
    if (!placed) {
      throw PipelineError("phantom " + c.id + ": could not place lesion " + std::to_string(l + 1) +
                          " inside the prostate after 100 attempts");
    }
  }

  for (std::size_t i = 0; i < activity.size(); ++i) c.pet.data[i] = static_cast<float>(activity[i]);
  const double sigma = spec.psf_fwhm_mm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  c.pet = gaussian_blur(c.pet, {sigma, sigma, sigma});
  for (auto& v : c.pet.data) {
    const double noisy = v + spec.noise_level * std::sqrt(std::max(0.0f, v)) * rng.normal();
    v = static_cast<float>(std::max(0.0, noisy));
  }
  c.gtv_label = gtv;
  c.histo_ref = gtv;
  return c;
}

}  // namespace vseg
