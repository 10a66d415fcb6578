#include "vseg/unet.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vseg/error.hpp"
#include "vseg/random.hpp"

namespace vseg {

void UNetConfig::validate() const {
  if (in_channels != 2) {
    throw ConfigError("unet: in_channels must be 2 (PET + prostate contour), got " +
                      std::to_string(in_channels));
  }
  if (out_channels != 1) throw ConfigError("unet: out_channels must be 1, got " + std::to_string(out_channels));
  if (levels != 3) throw ConfigError("unet: levels must be 3, got " + std::to_string(levels));
  if (base_channels == 0) throw ConfigError("unet: base_channels must be positive");
}

namespace {

// He-uniform (fan-in) initialization.
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

ConvBlock make_block(std::string name, std::size_t cin, std::size_t cout, std::size_t kernel, Rng& rng) {
  ConvBlock b;
  b.name = std::move(name);
  b.kernel = kernel;
  b.weight = he_uniform({cout, cin, kernel, kernel, kernel}, cin * kernel * kernel * kernel, rng);
  b.bias = Tensor::zeros({cout}, true);
  b.gamma = Tensor::full({cout}, 1.0, true);
  b.beta = Tensor::zeros({cout}, true);
  b.stats = BatchNormStats::identity(cout);
  return b;
}

}  // namespace

UNet3d UNet3d::build(const UNetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  UNet3d net;
  net.config_ = config;
  const std::size_t base = config.base_channels;
  auto level_channels = [base](std::size_t l) { return base << l; };

  std::size_t cin = config.in_channels;
  for (std::size_t l = 0; l < config.levels; ++l) {
    const std::size_t c = level_channels(l);
    const std::string prefix = "enc" + std::to_string(l);
    net.encoder_.push_back({make_block(prefix + ".conv0", cin, c, 3, rng), make_block(prefix + ".conv1", c, c, 3, rng)});
    cin = c;
  }
  const std::size_t cb = level_channels(config.levels);
  net.bottleneck_ = {make_block("bottleneck.conv0", cin, cb, 3, rng),
                     make_block("bottleneck.conv1", cb, cb, 3, rng)};

  net.up_.resize(config.levels);
  net.decoder_.resize(config.levels);
  std::size_t below = cb;
  for (std::size_t l = config.levels; l-- > 0;) {
    const std::size_t c = level_channels(l);
    const std::string up_name = "up" + std::to_string(l);
    net.up_[l] = UpConv{up_name, he_uniform({below, c, 2, 2, 2}, below, rng), Tensor::zeros({c}, true)};
    const std::string prefix = "dec" + std::to_string(l);
    net.decoder_[l] = {make_block(prefix + ".conv0", 2 * c, c, 3, rng), make_block(prefix + ".conv1", c, c, 3, rng),
                       make_block(prefix + ".conv2", c, c, 3, rng)};
    below = c;
  }
  net.head_ = make_block("head.conv", level_channels(0), config.out_channels, 1, rng);
  return net;
}

template <typename Stats>
Tensor UNet3d::run(const Tensor& input, bool training, Stats&& stats_for) const {
  if (input.dim() != 5 || input.size(1) != config_.in_channels) {
    throw ShapeError("unet: input must be [B, " + std::to_string(config_.in_channels) +
                     ", D, H, W], got " + shape_to_string(input.shape()));
  }
  static constexpr const char* kAxis[] = {"", "", "depth (z)", "height (y)", "width (x)"};
  const std::size_t divisor = config_.spatial_divisor();
  for (std::size_t a = 2; a < 5; ++a) {
    if (input.size(a) == 0 || input.size(a) % divisor != 0) {
      throw ShapeError(std::string("unet: ") + kAxis[a] + " extent " + std::to_string(input.size(a)) +
                       " is not a positive multiple of " + std::to_string(divisor));
    }
  }
  const BatchNormOptions bn{training, 1e-5, 0.1};
  auto apply = [&](const ConvBlock& b, const Tensor& x) {
    Tensor y = conv3d(x, b.weight, b.bias, b.kernel / 2);
    return batchnorm3d(y, b.gamma, b.beta, stats_for(b), bn);
  };
  auto stage = [&](const std::vector<ConvBlock>& blocks, Tensor x) {
    for (const auto& b : blocks) x = relu(apply(b, x));
    return x;
  };

  std::vector<Tensor> skips;
  Tensor x = input;
  for (const auto& level : encoder_) {
    x = stage(level, x);
    skips.push_back(x);
    x = maxpool3d(x).output;
  }
  x = stage(bottleneck_, x);
  for (std::size_t l = config_.levels; l-- > 0;) {
    x = conv_transpose3d(x, up_[l].weight, up_[l].bias);
    x = concat_channels(skips[l], x);
    x = stage(decoder_[l], x);
  }
  return sigmoid(apply(head_, x));
}

Tensor UNet3d::forward(const Tensor& input, bool training) {
  // `this` is non-const here, so the blocks' running statistics may be updated.
  return run(input, training, [](const ConvBlock& b) -> BatchNormStats& {
    return const_cast<BatchNormStats&>(b.stats);
  });
}

Tensor UNet3d::infer(const Tensor& input) const {
  NoGradGuard guard;
  std::map<const ConvBlock*, BatchNormStats> local;
  return run(input, false, [&local](const ConvBlock& b) -> BatchNormStats& {
    return local.try_emplace(&b, b.stats).first->second;
  });
}

std::vector<Parameter> UNet3d::parameters() const {
  std::vector<Parameter> params;
  auto add_block = [&](const ConvBlock& b) {
    params.push_back({b.name + ".weight", b.weight});
    params.push_back({b.name + ".bias", b.bias});
    params.push_back({b.name + ".bn.gamma", b.gamma});
    params.push_back({b.name + ".bn.beta", b.beta});
  };
  for (const auto& level : encoder_)
    for (const auto& b : level) add_block(b);
  for (const auto& b : bottleneck_) add_block(b);
  for (std::size_t l = config_.levels; l-- > 0;) {
    params.push_back({up_[l].name + ".weight", up_[l].weight});
    params.push_back({up_[l].name + ".bias", up_[l].bias});
    for (const auto& b : decoder_[l]) add_block(b);
  }
  add_block(head_);
  return params;
}

std::size_t UNet3d::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

std::vector<StateEntry> UNet3d::state() {
  std::vector<StateEntry> entries;
  for (auto& p : parameters()) entries.push_back({p.name, p.tensor.shape(), p.tensor.mutable_data()});
  auto add_stats = [&](ConvBlock& b) {
    entries.push_back({b.name + ".bn.running_mean", {b.stats.running_mean.size()}, b.stats.running_mean});
    entries.push_back({b.name + ".bn.running_var", {b.stats.running_var.size()}, b.stats.running_var});
  };
  for (auto& level : encoder_)
    for (auto& b : level) add_stats(b);
  for (auto& b : bottleneck_) add_stats(b);
  for (std::size_t l = config_.levels; l-- > 0;)
    for (auto& b : decoder_[l]) add_stats(b);
  add_stats(head_);
  return entries;
}

UNet3d UNet3d::clone() const {
  UNet3d copy = build(config_, 0);
  auto source = const_cast<UNet3d*>(this)->state();  // read only
  auto target = copy.state();
  for (std::size_t i = 0; i < source.size(); ++i) {
    std::copy(source[i].values.begin(), source[i].values.end(), target[i].values.begin());
  }
  return copy;
}

ArchitectureCensus UNet3d::census() const {
  ArchitectureCensus c;
  auto count = [&](const ConvBlock& b) {
    ++c.conv_blocks;
    if (b.kernel == 3) ++c.conv3x3x3;
    if (b.kernel == 1) ++c.conv1x1x1;
  };
  for (const auto& level : encoder_) {
    for (const auto& b : level) count(b);
    ++c.maxpools;  // every encoder level ends in a pooling step
  }
  for (const auto& b : bottleneck_) count(b);
  for (const auto& level : decoder_)
    for (const auto& b : level) count(b);
  count(head_);
  c.transposed_convs = up_.size();
  c.concatenations = decoder_.size();  // every decoder level consumes one skip
  return c;
}

LabelTensor predict_mask(const Tensor& prob, const LabelTensor& prostate, double threshold) {
  if (prob.shape() != prostate.shape()) {
    throw ShapeError("predict_mask: probability map " + shape_to_string(prob.shape()) +
                     " vs prostate mask " + shape_to_string(prostate.shape()));
  }
  const auto p = prob.data();
  LabelTensor out = LabelTensor::zeros(prob.shape());
  for (std::size_t i = 0; i < p.size(); ++i) out.set(i, p[i] > threshold && prostate[i] == 1);
  return out;
}

}  // namespace vseg
