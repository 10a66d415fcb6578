#include "vseg/volume.hpp"

#include <cmath>
#include <sstream>

#include "vseg/error.hpp"

namespace vseg {

namespace {

std::string fmt3(const auto& v) {
  std::ostringstream os;
  os << '(' << v[0] << ',' << v[1] << ',' << v[2] << ')';
  return os.str();
}

}  // namespace

Volume Volume::zeros(Index3 dims, Vec3 spacing, Vec3 origin, VolumeKind kind) {
  Volume v;
  v.dims = dims;
  v.spacing = spacing;
  v.origin = origin;
  v.kind = kind;
  v.data.assign(dims[0] * dims[1] * dims[2], 0.0f);
  return v;
}

Volume Volume::mask_like(const Volume& reference) {
  Volume v = zeros(reference.dims, reference.spacing, reference.origin, VolumeKind::mask);
  v.space = reference.space;
  return v;
}

void Volume::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw GeometryError("volume spacing must be positive and finite, got " + fmt3(spacing));
    }
  }
  if (data.size() != voxel_count()) {
    throw GeometryError("volume of dims " + fmt3(dims) + " holds " + std::to_string(data.size()) + " values");
  }
  if (kind == VolumeKind::mask) {
    for (float v : data) {
      if (v != 0.0f && v != 1.0f) throw GeometryError("mask volume contains non-binary value " + std::to_string(v));
    }
  }
}

void validate_aligned(const Volume& a, const Volume& b) {
  if (a.dims != b.dims) throw GeometryError("dims mismatch: " + fmt3(a.dims) + " vs " + fmt3(b.dims));
  for (int i = 0; i < 3; ++i) {
    if (std::abs(a.spacing[i] - b.spacing[i]) > 1e-6) {
      throw GeometryError("spacing mismatch: " + fmt3(a.spacing) + " vs " + fmt3(b.spacing) + " mm");
    }
  }
  for (int i = 0; i < 3; ++i) {
    if (std::abs(a.origin[i] - b.origin[i]) > 1e-3) {
      throw GeometryError("origin mismatch: " + fmt3(a.origin) + " vs " + fmt3(b.origin) + " mm");
    }
  }
}

std::size_t count_nonzero(const Volume& mask) {
  std::size_t n = 0;
  for (float v : mask.data) n += v != 0.0f;
  return n;
}

}  // namespace vseg
