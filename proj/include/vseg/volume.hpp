#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace vseg {

using Index3 = std::array<std::size_t, 3>;  // (x, y, z)
using Vec3 = std::array<double, 3>;          // (x, y, z) in mm

enum class VolumeKind { pet, mask };

// 3-D scalar grid with physical geometry. Voxel (x, y, z) is stored at
// x + nx * (y + ny * z) and its center lies at origin + index * spacing.
struct Volume {
  Index3 dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  VolumeKind kind = VolumeKind::pet;
  // Anatomical space label carried through I/O, not interpreted.
  std::string space = "left-posterior-superior";
  std::vector<float> data;

  static Volume zeros(Index3 dims, Vec3 spacing, Vec3 origin, VolumeKind kind);
  // Empty mask on the grid of `reference`.
  static Volume mask_like(const Volume& reference);

  std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + dims[0] * (y + dims[1] * z); }
  float& at(std::size_t x, std::size_t y, std::size_t z) { return data[index(x, y, z)]; }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return data[index(x, y, z)]; }
  double voxel_volume_mm3() const { return spacing[0] * spacing[1] * spacing[2]; }

  // Throws GeometryError on non-positive spacing, a data/dims size mismatch
  // or non-binary mask values.
  void validate() const;
};

// Passes iff dims are equal, spacing agrees within 1e-6 mm and origin within
// 1e-3 mm; otherwise throws GeometryError naming the first mismatch.
void validate_aligned(const Volume& a, const Volume& b);

// Number of set voxels of a mask.
std::size_t count_nonzero(const Volume& mask);

}  // namespace vseg
