#include <doctest.h>

#include <filesystem>

#include "support/nrrd_builder.hpp"
#include "vseg/error.hpp"
#include "vseg/nrrd.hpp"
#include "vseg/volume.hpp"

using namespace vseg;
using namespace vseg::testing;

namespace {

Volume sample_pet() {
  Volume v = Volume::zeros({4, 3, 2}, {2.0, 1.5, 3.25}, {-10.5, 0.1, 42.0}, VolumeKind::pet);
  Rng rng(3);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(-5.0, 50.0));
  v.data[0] = 1e-30f;
  v.data[1] = -0.0f;
  return v;
}

template <typename Fn>
int nrrd_error_line(Fn&& fn) {
  try {
    fn();
  } catch (const NrrdError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST_CASE("volume validation") {
  Volume v = Volume::zeros({2, 2, 2}, {1, 1, 1}, {0, 0, 0}, VolumeKind::mask);
  CHECK_NOTHROW(v.validate());
  v.data[3] = 0.5f;
  CHECK_THROWS_AS(v.validate(), GeometryError);
  v.data.pop_back();
  CHECK_THROWS_AS(v.validate(), GeometryError);
  Volume s = Volume::zeros({2, 2, 2}, {1, 0, 1}, {0, 0, 0}, VolumeKind::pet);
  CHECK_THROWS_AS(s.validate(), GeometryError);
  CHECK(Volume::zeros({2, 2, 2}, {2, 2, 2}, {0, 0, 0}, VolumeKind::pet).voxel_volume_mm3() == 8.0);
}

TEST_CASE("alignment tolerances") {
  const Volume a = Volume::zeros({2, 2, 2}, {2, 2, 2}, {0, 0, 0}, VolumeKind::pet);
  Volume b = a;
  b.origin[1] = 5e-4;
  CHECK_NOTHROW(validate_aligned(a, b));
  b.origin[1] = 2e-3;
  CHECK_THROWS_AS(validate_aligned(a, b), GeometryError);
  b = a;
  b.spacing[2] = 2.0 + 1e-5;
  CHECK_THROWS_AS(validate_aligned(a, b), GeometryError);
  b = Volume::zeros({2, 2, 3}, {2, 2, 2}, {0, 0, 0}, VolumeKind::pet);
  CHECK_THROWS_AS(validate_aligned(a, b), GeometryError);
}

TEST_CASE("writer output reads back exactly") {
  const Volume pet = sample_pet();
  for (auto enc : {NrrdEncoding::raw, NrrdEncoding::gzip}) {
    const Volume back = parse_nrrd(serialize_nrrd(pet, enc));
    CHECK(back.dims == pet.dims);
    CHECK(back.spacing == pet.spacing);
    CHECK(back.origin == pet.origin);
    CHECK(back.kind == VolumeKind::pet);
    CHECK(back.space == pet.space);
    for (std::size_t i = 0; i < pet.data.size(); ++i) {
      CHECK(std::bit_cast<std::uint32_t>(back.data[i]) == std::bit_cast<std::uint32_t>(pet.data[i]));
    }
  }
  Volume mask = Volume::mask_like(pet);
  mask.data[5] = mask.data[7] = 1.0f;
  const Volume m = parse_nrrd(serialize_nrrd(mask, NrrdEncoding::gzip));
  CHECK(m.kind == VolumeKind::mask);
  CHECK(m.data == mask.data);
}

TEST_CASE("files on disk round trip") {
  const auto path = std::filesystem::temp_directory_path() / "vseg_unit_io.nrrd";
  const Volume pet = sample_pet();
  write_nrrd(pet, path, NrrdEncoding::gzip);
  CHECK(read_nrrd(path).data == pet.data);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_nrrd(path), IoError);
}

TEST_CASE("every dtype, encoding and byte order reads value-exact") {
  Rng rng(7);
  for (auto t : {Dtype::u8, Dtype::i16, Dtype::u16, Dtype::i32, Dtype::f32, Dtype::f64}) {
    for (bool gz : {false, true}) {
      for (bool big : {false, true}) {
        NrrdFile f;
        f.type = t;
        f.gzip = gz;
        f.big_endian = big;
        f.values = representable_values(t, f.nx * f.ny * f.nz, rng);
        const Volume v = parse_nrrd(f.bytes(), VolumeKind::pet);
        CAPTURE(dtype_name(t));
        CHECK(v.dims == Index3{3, 2, 2});
        CHECK(v.spacing == Vec3{2.0, 1.5, 3.0});
        CHECK(v.origin == Vec3{-1.0, 2.5, 10.0});
        for (std::size_t i = 0; i < f.values.size(); ++i) CHECK(static_cast<double>(v.data[i]) == f.values[i]);
      }
    }
  }
}

TEST_CASE("spacings field without space directions") {
  NrrdFile f;
  f.geometry = "spacings: 0.5 0.75 4\n";
  f.values.assign(12, 1.0);
  const Volume v = parse_nrrd(f.bytes());
  CHECK(v.spacing == Vec3{0.5, 0.75, 4.0});
  CHECK(v.origin == Vec3{0.0, 0.0, 0.0});
}

TEST_CASE("mask volumes are binarized") {
  NrrdFile f;
  f.type = Dtype::u8;
  f.values = {0, 1, 2, 255, 0, 0, 0, 0, 0, 0, 0, 7};
  const Volume v = parse_nrrd(f.bytes(), VolumeKind::mask);
  CHECK(v.data[0] == 0.0f);
  CHECK(v.data[2] == 1.0f);
  CHECK(v.data[3] == 1.0f);
  CHECK(v.data[11] == 1.0f);
}

TEST_CASE("malformed headers raise structured errors") {
  NrrdFile good;
  good.values.assign(12, 1.0);
  const std::string bytes = good.bytes();
  auto replace = [&](const std::string& from, const std::string& to) {
    std::string b = bytes;
    b.replace(b.find(from), from.size(), to);
    return b;
  };
  CHECK(nrrd_error_line([&] { parse_nrrd("PNG\n" + bytes); }) == 1);
  CHECK(nrrd_error_line([&] { parse_nrrd(replace("dimension: 3", "dimension: 2")); }) == 4);
  CHECK(nrrd_error_line([&] { parse_nrrd(replace("type: float", "type: complex")); }) == 3);
  CHECK(nrrd_error_line([&] { parse_nrrd(replace("encoding: raw", "encoding: bzip2")); }) > 0);
  CHECK(nrrd_error_line([&] { parse_nrrd(replace("(2,0,0) (0,1.5,0)", "(2,0.1,0) (0,1.5,0)")); }) == 7);
  CHECK(nrrd_error_line([&] { parse_nrrd(replace("(2,0,0)", "(-2,0,0)")); }) == 7);
  CHECK(nrrd_error_line([&] { parse_nrrd(replace("sizes: 3 2 2", "sizes: 3 2 x")); }) == 6);
  CHECK(nrrd_error_line([&] { parse_nrrd(replace("sizes: 3 2 2", "sizes: 3 2")); }) == 6);
  CHECK(nrrd_error_line([&] { parse_nrrd(replace("encoding: raw\n", "encoding: raw\ndata file: x.raw\n")); }) > 0);
  CHECK(nrrd_error_line([&] { parse_nrrd(replace("dimension: 3\n", "")); }) == 0);
  CHECK(nrrd_error_line([&] { parse_nrrd(replace("dimension: 3\n", "dimension: 3\ndimension: 3\n")); }) > 0);
  CHECK(nrrd_error_line([&] { parse_nrrd(bytes.substr(0, bytes.size() - 4)); }) == 0);
  CHECK(nrrd_error_line([&] { parse_nrrd(bytes + "xx"); }) == 0);

  NrrdFile gz = good;
  gz.gzip = true;
  const std::string gzb = gz.bytes();
  CHECK_THROWS_AS(parse_nrrd(gzb.substr(0, gzb.size() - 6)), NrrdError);
  std::string flipped = gzb;
  flipped[gz.header().size() + 12] ^= 0x5a;
  CHECK_THROWS_AS(parse_nrrd(flipped), NrrdError);
}

TEST_CASE("header mutations never escape as unstructured failures") {
  NrrdFile good;
  good.values.assign(12, 3.0);
  Rng rng(99);
  const std::string base = good.bytes();
  const std::vector<std::string> junk = {"", "-1", "1e999", "nan", "(", "0", "18446744073709551616", "3 3 3 3",
                                         "(1,0,0) (0,1,0)", "gzip", "\x01\xff", "big", "  "};
  std::size_t structured = 0, accepted = 0;
  for (int i = 0; i < 200; ++i) {
    std::string b = base;
    const std::size_t header_end = good.header().size();
    const std::size_t at = rng.below(header_end);
    switch (rng.below(4)) {
      case 0: b.erase(at, 1 + rng.below(8)); break;
      case 1: b.insert(at, junk[rng.below(junk.size())]); break;
      case 2: b[at] = static_cast<char>(rng.below(256)); break;
      case 3: b.resize(rng.below(b.size())); break;
    }
    try {
      (void)parse_nrrd(b);
      ++accepted;
    } catch (const Error&) {
      ++structured;
    }
  }
  CHECK(structured + accepted == 200);
  CHECK(structured > 100);
}
