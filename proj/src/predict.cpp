#include "vseg/predict.hpp"

#include <chrono>

#include "vseg/error.hpp"
#include "vseg/nrrd.hpp"
#include "vseg/preprocess.hpp"

namespace vseg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

Prediction predict(const UNetCheckpoint& checkpoint, const Volume& pet, const Volume& prostate) {
  const auto start = Clock::now();
  pet.validate();
  prostate.validate();
  validate_aligned(pet, prostate);
  require_working_spacing(pet, "PET volume");
  Prediction out;
  if (count_nonzero(prostate) == 0) {
    out.mask = Volume::mask_like(pet);
    out.timing.compute_sec = seconds_since(start);
    return out;
  }
  const CropOffset offset = plan_crop(prostate, checkpoint.training_meta.crop);
  const Volume pet_crop = crop_volume(pet, offset);
  const Volume prostate_crop = crop_volume(prostate, offset);
  const Tensor prob = checkpoint.model.infer(make_input(pet_crop, prostate_crop, checkpoint.norm_stats));
  const LabelTensor labels = predict_mask(prob, make_labels(prostate_crop));
  out.mask = uncrop(labels_to_volume(labels, prostate_crop), offset);
  out.mask.space = pet.space;
  out.timing.compute_sec = seconds_since(start);
  return out;
}

Prediction predict_files(const std::filesystem::path& checkpoint_path, const std::filesystem::path& pet_path,
                         const std::filesystem::path& prostate_path, const std::filesystem::path& out_path) {
  auto start = Clock::now();
  const UNetCheckpoint checkpoint = load_checkpoint(checkpoint_path);
  const Volume pet = read_nrrd(pet_path, VolumeKind::pet);
  const Volume prostate = read_nrrd(prostate_path, VolumeKind::mask);
  const double load = seconds_since(start);

  Prediction out = predict(checkpoint, pet, prostate);
  out.timing.load_sec = load;

  start = Clock::now();
  write_nrrd(out.mask, out_path, NrrdEncoding::gzip);
  out.timing.store_sec = seconds_since(start);
  return out;
}

}  // namespace vseg
