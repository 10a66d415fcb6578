#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

struct Parameter {
  std::string name;
  Tensor tensor;
};

struct AdamState {
  std::int64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // First and second moments, one buffer per parameter, allocated on the
  // first step.
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Bias-corrected Adam update of every parameter from its accumulated grad.
// Throws OptimizerError naming each parameter that has no gradient.
void adam_step(std::span<Parameter> params, AdamState& state);

}  // namespace vseg
