#include "vseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vseg/error.hpp"
#include "vseg/random.hpp"

namespace vseg {

void require_working_spacing(const Volume& volume, const std::string& what) {
  for (int a = 0; a < 3; ++a) {
    if (std::abs(volume.spacing[a] - kWorkingSpacingMm) > 1e-3) {
      throw PipelineError(what + " has spacing " + std::to_string(volume.spacing[a]) + " mm on axis " +
                          "xyz"[a] + "; resample to 2 mm first (vseg resample)");
    }
  }
}

CropOffset plan_crop(const Volume& prostate, std::size_t size) {
  if (size == 0) throw ConfigError("crop size must be positive");
  require_working_spacing(prostate, "prostate mask");
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  std::size_t count = 0;
  const auto [nx, ny, nz] = prostate.dims;
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        if (prostate.at(x, y, z) == 0.0f) continue;
        sum[0] += static_cast<double>(x);
        sum[1] += static_cast<double>(y);
        sum[2] += static_cast<double>(z);
        ++count;
      }
  if (count == 0) throw PipelineError("cannot crop: prostate mask is empty");

  CropOffset off;
  off.size = size;
  off.original_dims = prostate.dims;
  off.original_origin = prostate.origin;
  const long c = static_cast<long>(size);
  for (int a = 0; a < 3; ++a) {
    const long n = static_cast<long>(prostate.dims[a]);
    const double centroid = sum[a] / static_cast<double>(count);
    if (n >= c) {
      const long start = std::lround(centroid - 0.5 * static_cast<double>(c - 1));
      off.start[a] = std::clamp(start, 0L, n - c);
    } else {
      off.start[a] = -((c - n) / 2);
      off.padded = true;
    }
  }
  return off;
}

Volume crop_volume(const Volume& volume, const CropOffset& off) {
  if (volume.dims != off.original_dims) throw GeometryError("crop_volume: volume does not match the crop plan grid");
  const std::size_t s = off.size;
  Vec3 origin{};
  for (int a = 0; a < 3; ++a) origin[a] = volume.origin[a] + static_cast<double>(off.start[a]) * volume.spacing[a];
  Volume out = Volume::zeros({s, s, s}, volume.spacing, origin, volume.kind);
  out.space = volume.space;
  const long nx = static_cast<long>(volume.dims[0]), ny = static_cast<long>(volume.dims[1]),
             nz = static_cast<long>(volume.dims[2]);
  for (std::size_t z = 0; z < s; ++z) {
    const long sz = off.start[2] + static_cast<long>(z);
    if (sz < 0 || sz >= nz) continue;
    for (std::size_t y = 0; y < s; ++y) {
      const long sy = off.start[1] + static_cast<long>(y);
      if (sy < 0 || sy >= ny) continue;
      for (std::size_t x = 0; x < s; ++x) {
        const long sx = off.start[0] + static_cast<long>(x);
        if (sx < 0 || sx >= nx) continue;
        out.at(x, y, z) = volume.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), static_cast<std::size_t>(sz));
      }
    }
  }
  return out;
}

CroppedCase crop_to_roi(const CaseRecord& record, std::size_t size) {
  record.validate();
  require_working_spacing(record.pet, "case " + record.id);
  CroppedCase out;
  try {
    out.offset = plan_crop(record.prostate, size);
  } catch (const PipelineError& e) {
    throw PipelineError("case " + record.id + ": " + e.what());
  }
  out.record.id = record.id;
  out.record.pet = crop_volume(record.pet, out.offset);
  out.record.prostate = crop_volume(record.prostate, out.offset);
  if (record.gtv_label) out.record.gtv_label = crop_volume(*record.gtv_label, out.offset);
  if (record.histo_ref) out.record.histo_ref = crop_volume(*record.histo_ref, out.offset);
  return out;
}

Volume uncrop(const Volume& cropped, const CropOffset& off) {
  const std::size_t s = off.size;
  if (cropped.dims != Index3{s, s, s}) throw GeometryError("uncrop: volume is not a crop cube of the plan size");
  Volume out = Volume::zeros(off.original_dims, cropped.spacing, off.original_origin, cropped.kind);
  out.space = cropped.space;
  for (std::size_t z = 0; z < s; ++z) {
    const long tz = off.start[2] + static_cast<long>(z);
    if (tz < 0 || tz >= static_cast<long>(off.original_dims[2])) continue;
    for (std::size_t y = 0; y < s; ++y) {
      const long ty = off.start[1] + static_cast<long>(y);
      if (ty < 0 || ty >= static_cast<long>(off.original_dims[1])) continue;
      for (std::size_t x = 0; x < s; ++x) {
        const long tx = off.start[0] + static_cast<long>(x);
        if (tx < 0 || tx >= static_cast<long>(off.original_dims[0])) continue;
        out.at(static_cast<std::size_t>(tx), static_cast<std::size_t>(ty), static_cast<std::size_t>(tz)) =
            cropped.at(x, y, z);
      }
    }
  }
  return out;
}

NormalizationStats fit_normalization(std::span<const Volume> crops) {
  if (crops.empty()) throw PipelineError("fit_normalization: no training crops");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& v : crops) {
    for (float x : v.data) {
      if (!std::isfinite(x)) throw PipelineError("fit_normalization: training crops contain non-finite voxels");
      total += x;
    }
    n += v.data.size();
  }
  if (n == 0) throw PipelineError("fit_normalization: training crops hold no voxels");
  const double mean = total / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& v : crops)
    for (float x : v.data) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (!(sd > 0.0)) throw PipelineError("fit_normalization: pooled standard deviation is zero");
  return {mean, sd, crops.size()};
}

Volume apply_normalization(const Volume& volume, const NormalizationStats& stats) {
  if (!(stats.std > 0.0)) throw PipelineError("apply_normalization: std must be positive");
  Volume out = volume;
  for (auto& x : out.data) x = static_cast<float>((x - stats.mean) / stats.std);
  return out;
}

CohortSplit split_cohort(std::size_t n, double eval_fraction, std::uint64_t seed) {
  if (n < 2) throw PipelineError("split_cohort: need at least 2 cases, got " + std::to_string(n));
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw ConfigError("eval_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);
  const auto want = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(n)));
  const std::size_t k = std::clamp<std::size_t>(want, 1, n - 1);
  CohortSplit split;
  split.eval.assign(order.begin(), order.begin() + static_cast<long>(k));
  split.train.assign(order.begin() + static_cast<long>(k), order.end());
  std::sort(split.eval.begin(), split.eval.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

Volume threshold_gtv30(const Volume& pet, const Volume& prostate, double fraction) {
  validate_aligned(pet, prostate);
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("threshold fraction must lie in [0, 1]");
  bool any = false;
  float peak = 0.0f;
  for (std::size_t i = 0; i < pet.data.size(); ++i) {
    if (prostate.data[i] == 0.0f) continue;
    peak = any ? std::max(peak, pet.data[i]) : pet.data[i];
    any = true;
  }
  if (!any) throw PipelineError("threshold_gtv30: prostate mask is empty");
  const double level = fraction * static_cast<double>(peak);
  Volume out = Volume::mask_like(pet);
  for (std::size_t i = 0; i < pet.data.size(); ++i) {
    if (prostate.data[i] != 0.0f && static_cast<double>(pet.data[i]) >= level) out.data[i] = 1.0f;
  }
  return out;
}

Volume mask_by(const Volume& mask, const Volume& prostate) {
  validate_aligned(mask, prostate);
  Volume out = mask;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (prostate.data[i] == 0.0f) out.data[i] = 0.0f;
  }
  return out;
}

Tensor make_input(const Volume& pet, const Volume& prostate, const NormalizationStats& stats) {
  validate_aligned(pet, prostate);
  if (!(stats.std > 0.0)) throw PipelineError("make_input: normalization std must be positive");
  const std::size_t n = pet.voxel_count();
  std::vector<double> data(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = (static_cast<double>(pet.data[i]) - stats.mean) / stats.std;
    data[n + i] = prostate.data[i] != 0.0f ? 1.0 : 0.0;
  }
  return Tensor::from_data({1, 2, pet.dims[2], pet.dims[1], pet.dims[0]}, std::move(data));
}

LabelTensor make_labels(const Volume& mask) {
  std::vector<std::uint8_t> values(mask.voxel_count());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = mask.data[i] != 0.0f ? 1 : 0;
  return LabelTensor({1, 1, mask.dims[2], mask.dims[1], mask.dims[0]}, std::move(values));
}

Volume labels_to_volume(const LabelTensor& labels, const Volume& reference) {
  const Shape expect{1, 1, reference.dims[2], reference.dims[1], reference.dims[0]};
  if (labels.shape() != expect) {
    throw ShapeError("labels_to_volume: labels " + shape_to_string(labels.shape()) + " vs grid " +
                     shape_to_string(expect));
  }
  Volume out = Volume::mask_like(reference);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = labels[i] ? 1.0f : 0.0f;
  return out;
}

}  // namespace vseg
