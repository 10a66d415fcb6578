#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

// 3-D cross-correlation, stride 1. input [B,Cin,D,H,W], weight
// [Cout,Cin,k,k,k], bias [Cout]. Output extents are n + 2*padding - k + 1.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t padding = 1);

// Transposed convolution with kernel 2, stride 2, padding 0: every spatial
// extent doubles. weight [Cin,Cout,2,2,2], bias [Cout].
Tensor conv_transpose3d(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct MaxPoolResult {
  Tensor output;
  // Flat input index of the selected element for every output element.
  std::vector<std::size_t> argmax;
};

// 2x2x2 max pooling with stride 2. Ties resolve to the first element in
// z-y-x scan order.
MaxPoolResult maxpool3d(const Tensor& input);

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  static BatchNormStats identity(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  }
};

struct BatchNormOptions {
  bool training = true;
  double eps = 1e-5;
  double momentum = 0.1;
};

// Per-channel batch normalization over (batch, spatial). In training mode the
// batch statistics normalize the input and update `stats`; in eval mode the
// running statistics are used.
Tensor batchnorm3d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, const BatchNormOptions& options = {});

Tensor relu(const Tensor& input);
// Zeroes every element whose mask value is 0; mask has the input's shape.
Tensor apply_mask(const Tensor& input, const LabelTensor& mask);
Tensor sigmoid(const Tensor& input);
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& input);
Tensor square(const Tensor& input);
// Scalar sum_i input[i] * weights[i]; weights are constants.
Tensor weighted_sum(const Tensor& input, std::span<const double> weights);

}  // namespace vseg
