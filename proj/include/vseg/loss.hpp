#pragma once

#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

struct LossConfig {
  std::size_t label_count = 1;
  // Per-label weights w_l; empty means 1.0 for every label.
  std::vector<double> class_weights;
  double smooth_eps = 1e-6;
};

// Soft dice loss over prediction channels (labels):
//   1 - (2 * sum_l w_l sum_n y_ln x_ln + eps) / (sum_l w_l sum_n (y_ln + x_ln) + eps)
// pred is [B, L, ...] with values in [0, 1]; target has the same shape.
Tensor dice_loss(const Tensor& pred, const LabelTensor& target, const LossConfig& config = {});

}  // namespace vseg
