#pragma once

#include <filesystem>

#include "vseg/checkpoint.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct PredictTiming {
  double load_sec = 0.0;
  double compute_sec = 0.0;
  double store_sec = 0.0;
  double total_sec() const { return load_sec + compute_sec + store_sec; }
};

struct Prediction {
  Volume mask;  // on the input grid, subset of the prostate
  PredictTiming timing;
};

// crop -> normalize with checkpoint stats -> forward -> threshold 0.5 ->
// mask by prostate -> un-crop. An empty prostate yields an empty mask.
// Throws GeometryError for misaligned inputs and PipelineError unless the
// spacing is 2 mm. Only compute_sec is filled in.
Prediction predict(const UNetCheckpoint& checkpoint, const Volume& pet, const Volume& prostate);

// Reads the inputs, predicts and writes the mask, timing every stage.
Prediction predict_files(const std::filesystem::path& checkpoint_path, const std::filesystem::path& pet_path,
                         const std::filesystem::path& prostate_path, const std::filesystem::path& out_path);

}  // namespace vseg
