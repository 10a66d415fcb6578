#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vseg/adam.hpp"
#include "vseg/ops.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

struct UNetConfig {
  std::size_t in_channels = 2;  // normalized PET + prostate mask
  std::size_t base_channels = 32;
  std::size_t levels = 3;
  std::size_t out_channels = 1;

  // Throws ConfigError unless the config describes the fixed topology.
  void validate() const;
  // Input extents must be multiples of this.
  std::size_t spatial_divisor() const { return std::size_t{1} << levels; }
};

// Convolution followed by batch norm; the activation is applied by the
// network (ReLU everywhere except the sigmoid head).
struct ConvBlock {
  std::string name;
  std::size_t kernel = 3;
  Tensor weight;  // [Cout, Cin, k, k, k]
  Tensor bias;    // [Cout]
  Tensor gamma;   // [Cout]
  Tensor beta;    // [Cout]
  BatchNormStats stats;
};

struct UpConv {
  std::string name;
  Tensor weight;  // [Cin, Cout, 2, 2, 2]
  Tensor bias;    // [Cout]
};

struct ArchitectureCensus {
  std::size_t conv_blocks = 0;
  std::size_t conv3x3x3 = 0;
  std::size_t conv1x1x1 = 0;
  std::size_t maxpools = 0;
  std::size_t transposed_convs = 0;
  std::size_t concatenations = 0;
};

// Mutable view of one named tensor of the model state (parameters and
// batch-norm running statistics), used for checkpointing.
struct StateEntry {
  std::string name;
  Shape shape;
  std::span<double> values;
};

// Three-level 3-D U-Net: encoder levels of two conv blocks, a two-block
// bottleneck, decoder levels of three conv blocks after a transposed-conv
// upsampling and skip concatenation, and a 1x1x1 conv + BN + sigmoid head.
class UNet3d {
 public:
  static UNet3d build(const UNetConfig& config, std::uint64_t seed);

  const UNetConfig& config() const { return config_; }

  // input [B, 2, D, H, W] -> probabilities [B, 1, D, H, W]. Training mode
  // records the graph and updates batch-norm running statistics.
  Tensor forward(const Tensor& input, bool training);

  // Eval-mode forward without graph recording; safe to call concurrently.
  Tensor infer(const Tensor& input) const;

  // Trainable tensors in a fixed order; copies share storage with the model.
  std::vector<Parameter> parameters() const;
  std::size_t parameter_count() const;

  std::vector<StateEntry> state();
  // Deep copy with independent storage and no gradients.
  UNet3d clone() const;
  ArchitectureCensus census() const;

 private:
  template <typename Stats>
  Tensor run(const Tensor& input, bool training, Stats&& stats_for) const;

  UNetConfig config_;
  std::vector<std::vector<ConvBlock>> encoder_;
  std::vector<ConvBlock> bottleneck_;
  std::vector<UpConv> up_;                       // up_[l] upsamples into level l
  std::vector<std::vector<ConvBlock>> decoder_;  // decoder_[l] works at level l
  ConvBlock head_;
};

// Thresholded segmentation restricted to the prostate: voxel is set iff
// prob > threshold and the prostate mask is set. With a single sigmoid
// channel this equals a two-class argmax at threshold 0.5.
LabelTensor predict_mask(const Tensor& prob, const LabelTensor& prostate, double threshold = 0.5);

}  // namespace vseg
