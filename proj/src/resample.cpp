#include "vseg/resample.hpp"

#include <algorithm>
#include <cmath>

#include "vseg/error.hpp"
#include "vseg/parallel.hpp"

namespace vseg {

std::optional<Interpolation> parse_interpolation(std::string_view name) {
  if (name == "nearest") return Interpolation::nearest;
  if (name == "trilinear" || name == "linear") return Interpolation::trilinear;
  if (name == "bspline3" || name == "bspline") return Interpolation::bspline3;
  if (name == "gaussian") return Interpolation::gaussian;
  return std::nullopt;
}

const char* interpolation_name(Interpolation method) {
  switch (method) {
    case Interpolation::nearest: return "nearest";
    case Interpolation::trilinear: return "trilinear";
    case Interpolation::bspline3: return "bspline3";
    case Interpolation::gaussian: return "gaussian";
  }
  return "unknown";
}

void bspline3_prefilter(std::vector<double>& c) {
  const std::size_t n = c.size();
  if (n < 2) return;
  const double z = std::sqrt(3.0) - 2.0;
  const double gain = (1.0 - z) * (1.0 - 1.0 / z);
  for (auto& v : c) v *= gain;

  // Causal initialization for the mirror-symmetric extension.
  const std::size_t horizon = static_cast<std::size_t>(std::ceil(std::log(1e-17) / std::log(std::abs(z))));
  if (horizon < n) {
    double zk = z, sum = c[0];
    for (std::size_t k = 1; k < horizon; ++k) {
      sum += zk * c[k];
      zk *= z;
    }
    c[0] = sum;
  } else {
    double zk = z;
    const double zn = std::pow(z, static_cast<double>(n - 1));
    double z2n = zn * zn / z;
    double sum = c[0] + zn * c[n - 1];
    for (std::size_t k = 1; k + 1 < n; ++k) {
      sum += (zk + z2n) * c[k];
      zk *= z;
      z2n /= z;
    }
    c[0] = sum / (1.0 - zn * zn);
  }
  for (std::size_t k = 1; k < n; ++k) c[k] += z * c[k - 1];
  c[n - 1] = (z / (z * z - 1.0)) * (c[n - 1] + z * c[n - 2]);
  for (std::size_t k = n - 1; k-- > 0;) c[k] = z * (c[k + 1] - c[k]);
}

namespace {

std::size_t mirror_index(long k, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  k %= period;
  if (k < 0) k += period;
  return static_cast<std::size_t>(k < static_cast<long>(n) ? k : period - k);
}

}  // namespace

Interpolator::Interpolator(const Volume& volume, Interpolation method, Vec3 gaussian_sigma_mm)
    : volume_(volume), method_(method), sigma_mm_(gaussian_sigma_mm) {
  volume.validate();
  if (volume.voxel_count() == 0) throw GeometryError("cannot interpolate an empty volume");
  if (method == Interpolation::gaussian) {
    for (double s : sigma_mm_) {
      if (!(s > 0.0)) throw ConfigError("gaussian interpolation needs a positive sigma");
    }
  }
  if (method != Interpolation::bspline3) return;
  const auto [nx, ny, nz] = volume.dims;
  coefficients_.assign(volume.data.begin(), volume.data.end());
  std::vector<double> line;
  auto filter_axis = [&](std::size_t n, std::size_t stride, std::size_t lines, auto&& base_of) {
    line.resize(n);
    for (std::size_t l = 0; l < lines; ++l) {
      const std::size_t base = base_of(l);
      for (std::size_t i = 0; i < n; ++i) line[i] = coefficients_[base + i * stride];
      bspline3_prefilter(line);
      for (std::size_t i = 0; i < n; ++i) coefficients_[base + i * stride] = line[i];
    }
  };
  filter_axis(nx, 1, ny * nz, [&](std::size_t l) { return l * nx; });
  filter_axis(ny, nx, nx * nz, [&](std::size_t l) { return (l / nx) * nx * ny + l % nx; });
  filter_axis(nz, nx * ny, nx * ny, [&](std::size_t l) { return l; });
}

std::vector<Interpolator::Tap> Interpolator::taps(int axis, double u) const {
  const std::size_t n = volume_.dims[axis];
  u = std::clamp(u, 0.0, static_cast<double>(n - 1));
  switch (method_) {
    case Interpolation::nearest: {
      // Ties go to the lower index.
      return {{static_cast<std::size_t>(std::clamp(std::ceil(u - 0.5), 0.0, static_cast<double>(n - 1))), 1.0}};
    }
    case Interpolation::trilinear: {
      if (n == 1) return {{0, 1.0}};
      const std::size_t i0 = std::min(static_cast<std::size_t>(std::floor(u)), n - 2);
      const double t = u - static_cast<double>(i0);
      return {{i0, 1.0 - t}, {i0 + 1, t}};
    }
    case Interpolation::bspline3: {
      const double fl = std::floor(u);
      const double t = u - fl;
      const long i = static_cast<long>(fl);
      const double t2 = t * t, t3 = t2 * t;
      const double w[4] = {(1.0 - t) * (1.0 - t) * (1.0 - t) / 6.0, (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0,
                           (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0, t3 / 6.0};
      std::vector<Tap> out;
      out.reserve(4);
      for (int k = 0; k < 4; ++k) out.push_back({mirror_index(i - 1 + k, n), w[k]});
      return out;
    }
    case Interpolation::gaussian: {
      const double spacing = volume_.spacing[axis];
      const double sigma = sigma_mm_[axis];
      const double radius = 3.0 * sigma / spacing;  // voxel units
      const long lo = std::max(0L, static_cast<long>(std::ceil(u - radius)));
      const long hi = std::min(static_cast<long>(n) - 1, static_cast<long>(std::floor(u + radius)));
      std::vector<Tap> out;
      double total = 0.0;
      for (long i = lo; i <= hi; ++i) {
        const double d = (static_cast<double>(i) - u) * spacing;
        const double w = std::exp(-d * d / (2.0 * sigma * sigma));
        out.push_back({static_cast<std::size_t>(i), w});
        total += w;
      }
      if (out.empty()) return {{static_cast<std::size_t>(std::lround(u)), 1.0}};
      for (auto& tap : out) tap.weight /= total;
      return out;
    }
  }
  return {};
}

double Interpolator::combine(const std::vector<Tap>& tx, const std::vector<Tap>& ty, const std::vector<Tap>& tz) const {
  const auto nx = volume_.dims[0], ny = volume_.dims[1];
  const bool spline = method_ == Interpolation::bspline3;
  double acc = 0.0;
  for (const auto& z : tz) {
    double acc_y = 0.0;
    for (const auto& y : ty) {
      const std::size_t row = (z.index * ny + y.index) * nx;
      double acc_x = 0.0;
      for (const auto& x : tx) {
        acc_x += x.weight * (spline ? coefficients_[row + x.index] : static_cast<double>(volume_.data[row + x.index]));
      }
      acc_y += y.weight * acc_x;
    }
    acc += z.weight * acc_y;
  }
  return acc;
}

double Interpolator::at(const Vec3& point_mm) const {
  std::vector<Tap> t[3];
  for (int a = 0; a < 3; ++a) t[a] = taps(a, (point_mm[a] - volume_.origin[a]) / volume_.spacing[a]);
  return combine(t[0], t[1], t[2]);
}

double interpolate_at(const Volume& volume, const Vec3& point_mm, Interpolation method, Vec3 gaussian_sigma_mm) {
  return Interpolator(volume, method, gaussian_sigma_mm).at(point_mm);
}

Index3 resampled_dims(const Volume& volume, const Vec3& target_spacing) {
  Index3 dims{};
  for (int a = 0; a < 3; ++a) {
    if (!(target_spacing[a] > 0.0)) throw ConfigError("target spacing must be positive");
    const double extent = static_cast<double>(volume.dims[a]) * volume.spacing[a] / target_spacing[a];
    // The tolerance absorbs representation error in products like 100 * 4.1.
    dims[a] = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(extent - 1e-6)));
  }
  return dims;
}

Vec3 resampled_origin(const Volume& volume, const Vec3& target_spacing) {
  Vec3 origin{};
  for (int a = 0; a < 3; ++a) origin[a] = volume.origin[a] + 0.5 * target_spacing[a] - 0.5 * volume.spacing[a];
  return origin;
}

Volume resample(const Volume& volume, const ResampleSpec& spec) {
  if (volume.kind == VolumeKind::mask && spec.method != Interpolation::nearest) {
    throw ConfigError(std::string("masks must be resampled with nearest-neighbour interpolation, not ") +
                      interpolation_name(spec.method));
  }
  const Index3 dims = resampled_dims(volume, spec.target_spacing);
  Volume out = Volume::zeros(dims, spec.target_spacing, resampled_origin(volume, spec.target_spacing), volume.kind);
  out.space = volume.space;
  Vec3 sigma{};
  for (int a = 0; a < 3; ++a) sigma[a] = spec.gaussian_sigma_factor * spec.target_spacing[a];
  const Interpolator interp(volume, spec.method, sigma);

  std::vector<std::vector<Interpolator::Tap>> taps[3];
  for (int a = 0; a < 3; ++a) {
    taps[a].resize(dims[a]);
    for (std::size_t k = 0; k < dims[a]; ++k) {
      const double p = out.origin[a] + static_cast<double>(k) * out.spacing[a];
      taps[a][k] = interp.taps(a, (p - volume.origin[a]) / volume.spacing[a]);
    }
  }
  parallel_for(dims[2], [&](std::size_t z) {
    for (std::size_t y = 0; y < dims[1]; ++y)
      for (std::size_t x = 0; x < dims[0]; ++x)
        out.at(x, y, z) = static_cast<float>(interp.combine(taps[0][x], taps[1][y], taps[2][z]));
  });
  return out;
}

}  // namespace vseg
