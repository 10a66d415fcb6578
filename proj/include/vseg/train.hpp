#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "vseg/case.hpp"
#include "vseg/checkpoint.hpp"

namespace vseg {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t epochs = 1019;
  std::size_t batch = 1;
  std::size_t crop = 64;
  double eval_fraction = 10.0 / 152.0;
  std::uint64_t seed = 0;
  bool augmentation = false;  // not supported; must stay off
  std::size_t base_channels = 32;

  // Throws ConfigError: crop must be a positive multiple of 8, epochs and
  // batch positive, augmentation off.
  void validate() const;
};

// Eval distances are means over eval cases where both masks are nonempty;
// NaN when there is none.
struct CurveRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double eval_dsc = 0.0;
  double eval_hd_mm = 0.0;
  double eval_assd_mm = 0.0;
};

struct CurveLog {
  std::vector<CurveRow> rows;

  // epoch,train_loss,eval_loss,eval_dsc,eval_hd_mm,eval_assd_mm
  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  UNetCheckpoint final_checkpoint;
  UNetCheckpoint best_checkpoint;  // lowest eval loss, earliest on ties
  CurveLog curves;
  std::vector<std::string> train_ids;
  std::vector<std::string> eval_ids;
};

using EpochCallback = std::function<void(const CurveRow&)>;

// Crops every case, fits pooled normalization on the training crops and
// runs Adam on the dice loss between prostate-masked probabilities and
// prostate-masked labels. Throws
// PipelineError when a case has no gtv_label and TrainingError on a NaN loss.
TrainResult train(const std::vector<CaseRecord>& cases, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace vseg
