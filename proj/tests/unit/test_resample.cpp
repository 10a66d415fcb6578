#include <doctest.h>

#include <cmath>

#include "vseg/error.hpp"
#include "vseg/parallel.hpp"
#include "vseg/random.hpp"
#include "vseg/resample.hpp"

using namespace vseg;

namespace {

Volume affine_volume(Index3 dims, Vec3 spacing, Vec3 origin, const std::array<double, 4>& c) {
  Volume v = Volume::zeros(dims, spacing, origin, VolumeKind::pet);
  for (std::size_t z = 0; z < dims[2]; ++z)
    for (std::size_t y = 0; y < dims[1]; ++y)
      for (std::size_t x = 0; x < dims[0]; ++x) {
        const double px = origin[0] + x * spacing[0], py = origin[1] + y * spacing[1], pz = origin[2] + z * spacing[2];
        v.at(x, y, z) = static_cast<float>(c[0] + c[1] * px + c[2] * py + c[3] * pz);
      }
  return v;
}

// Dense solve of the mirror-boundary interpolation system
//   (c[i-1] + 4 c[i] + c[i+1]) / 6 = s[i],  c[-1] = c[1], c[n] = c[n-2].
std::vector<double> bspline_coefficients_dense(const std::vector<double>& s) {
  const std::size_t n = s.size();
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    a[i][i] += 4.0 / 6.0;
    a[i][i == 0 ? 1 : i - 1] += 1.0 / 6.0;
    a[i][i == n - 1 ? n - 2 : i + 1] += 1.0 / 6.0;
    a[i][n] = s[i];
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t r = k + 1; r < n; ++r)
      if (std::abs(a[r][k]) > std::abs(a[piv][k])) piv = r;
    std::swap(a[k], a[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == k) continue;
      const double f = a[r][k] / a[k][k];
      for (std::size_t c = k; c <= n; ++c) a[r][c] -= f * a[k][c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = a[i][n] / a[i][i];
  return x;
}

}  // namespace

TEST_CASE("output grid convention") {
  const Volume v = Volume::zeros({10, 7, 3}, {1.0, 1.0, 3.0}, {5.0, 0.0, -2.0}, VolumeKind::pet);
  CHECK(resampled_dims(v, {2, 2, 2}) == Index3{5, 4, 5});  // ceil(10/2), ceil(3.5), ceil(4.5)
  const Vec3 o = resampled_origin(v, {2, 2, 2});
  CHECK(o[0] == doctest::Approx(5.5));
  CHECK(o[1] == doctest::Approx(0.5));
  CHECK(o[2] == doctest::Approx(-2.5));
  // Exact multiples do not gain a voxel from rounding noise.
  CHECK(resampled_dims(Volume::zeros({3, 3, 3}, {0.7, 0.7, 0.7}, {0, 0, 0}, VolumeKind::pet), {0.7, 2.1, 0.3}) ==
        Index3{3, 1, 7});
}

TEST_CASE("method names") {
  for (auto m : {Interpolation::nearest, Interpolation::trilinear, Interpolation::bspline3, Interpolation::gaussian}) {
    CHECK(parse_interpolation(interpolation_name(m)) == m);
  }
  CHECK_FALSE(parse_interpolation("cubic").has_value());
}

TEST_CASE("constant volumes stay constant") {
  const Volume v = affine_volume({9, 8, 7}, {1.3, 0.9, 2.7}, {1, 2, 3}, {4.25, 0, 0, 0});
  for (auto m : {Interpolation::nearest, Interpolation::trilinear, Interpolation::bspline3, Interpolation::gaussian}) {
    const Volume r = resample(v, {{2, 2, 2}, m});
    const double tol = m == Interpolation::gaussian ? 1e-3 : 1e-6;
    for (float x : r.data) CHECK(std::abs(x - 4.25) <= tol);
  }
}

TEST_CASE("trilinear reproduces affine functions inside the domain") {
  const std::array<double, 4> c{1.0, 0.5, -0.25, 0.125};
  const Volume v = affine_volume({12, 10, 9}, {1.0, 1.5, 2.0}, {0, 0, 0}, c);
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p{rng.uniform(0, 11), rng.uniform(0, 13.5), rng.uniform(0, 16)};
    const double expect = c[0] + c[1] * p[0] + c[2] * p[1] + c[3] * p[2];
    CHECK(std::abs(interpolate_at(v, p, Interpolation::trilinear) - expect) <= 1e-5);
  }
}

TEST_CASE("bspline3 reproduces affine functions away from the border") {
  const std::array<double, 4> c{0.5, 0.25, -0.125, 0.0625};
  const Volume v = affine_volume({40, 40, 40}, {1, 1, 1}, {-20, -20, -20}, c);
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p{rng.uniform(-7, 7), rng.uniform(-7, 7), rng.uniform(-7, 7)};
    const double expect = c[0] + c[1] * p[0] + c[2] * p[1] + c[3] * p[2];
    CHECK(std::abs(interpolate_at(v, p, Interpolation::bspline3) - expect) <= 1e-5);
  }
  // f(x) = x along one axis at a quarter-voxel offset.
  const Volume line = affine_volume({49, 1, 1}, {1, 1, 1}, {-24, 0, 0}, {0, 1, 0, 0});
  CHECK(interpolate_at(line, {0.25, 0, 0}, Interpolation::bspline3) == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("bspline3 prefilter solves the interpolation system") {
  Rng rng(3);
  for (std::size_t n : {2u, 3u, 5u, 17u, 64u}) {
    std::vector<double> s(n);
    for (auto& x : s) x = rng.uniform(-3, 3);
    auto c = s;
    bspline3_prefilter(c);
    const auto expect = bspline_coefficients_dense(s);
    for (std::size_t i = 0; i < n; ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-9));
  }
}

TEST_CASE("bspline3 and trilinear interpolate the samples") {
  Volume v = Volume::zeros({6, 5, 4}, {1, 1, 1}, {0, 0, 0}, VolumeKind::pet);
  Rng rng(4);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(0, 10));
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 6; ++x) {
        const Vec3 p{double(x), double(y), double(z)};
        CHECK(interpolate_at(v, p, Interpolation::bspline3) == doctest::Approx(v.at(x, y, z)).epsilon(1e-9));
        CHECK(interpolate_at(v, p, Interpolation::trilinear) == doctest::Approx(v.at(x, y, z)).epsilon(1e-12));
        CHECK(interpolate_at(v, p, Interpolation::nearest) == v.at(x, y, z));
      }
}

TEST_CASE("gaussian collocates when the input grid is coarse relative to sigma") {
  Volume v = Volume::zeros({5, 5, 5}, {2, 2, 2}, {0, 0, 0}, VolumeKind::pet);
  Rng rng(5);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(0, 10));
  // sigma 0.5 mm: neighbours 2 mm away lie beyond the 3-sigma window.
  CHECK(interpolate_at(v, {4, 2, 6}, Interpolation::gaussian, {0.5, 0.5, 0.5}) == doctest::Approx(v.at(2, 1, 3)));
}

TEST_CASE("nearest keeps masks binary and breaks ties downward") {
  Volume m = Volume::zeros({7, 6, 5}, {1, 1, 1}, {0, 0, 0}, VolumeKind::mask);
  Rng rng(6);
  for (auto& x : m.data) x = rng.uniform() < 0.4 ? 1.0f : 0.0f;
  const Volume r = resample(m, {{0.7, 1.6, 2.0}, Interpolation::nearest});
  CHECK(r.kind == VolumeKind::mask);
  for (float x : r.data) CHECK((x == 0.0f || x == 1.0f));

  Volume line = Volume::zeros({2, 1, 1}, {1, 1, 1}, {0, 0, 0}, VolumeKind::pet);
  line.data = {3.0f, 8.0f};
  CHECK(interpolate_at(line, {0.5, 0, 0}, Interpolation::nearest) == 3.0);
  CHECK(interpolate_at(line, {0.51, 0, 0}, Interpolation::nearest) == 8.0);
}

TEST_CASE("masks refuse smoothing interpolators") {
  const Volume m = Volume::zeros({4, 4, 4}, {1, 1, 1}, {0, 0, 0}, VolumeKind::mask);
  CHECK_THROWS_AS(resample(m, {{2, 2, 2}, Interpolation::trilinear}), ConfigError);
  CHECK_NOTHROW(resample(m, {{2, 2, 2}, Interpolation::nearest}));
}

TEST_CASE("out-of-domain points replicate the border") {
  const Volume v = affine_volume({4, 4, 4}, {1, 1, 1}, {0, 0, 0}, {0, 1, 0, 0});
  for (auto m : {Interpolation::nearest, Interpolation::trilinear, Interpolation::bspline3}) {
    CHECK(interpolate_at(v, {-5, 1, 1}, m) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(interpolate_at(v, {9, 1, 1}, m) == doctest::Approx(3.0).epsilon(1e-9));
  }
}

TEST_CASE("resampling is identical for any thread count") {
  Volume v = Volume::zeros({20, 18, 16}, {1.1, 0.9, 1.7}, {0, 0, 0}, VolumeKind::pet);
  Rng rng(7);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(0, 10));
  for (auto m : {Interpolation::trilinear, Interpolation::bspline3, Interpolation::gaussian}) {
    set_thread_count(1);
    const Volume a = resample(v, {{2, 2, 2}, m});
    set_thread_count(4);
    const Volume b = resample(v, {{2, 2, 2}, m});
    set_thread_count(1);
    CHECK(a.data == b.data);
  }
}
