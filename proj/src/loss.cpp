#include "vseg/loss.hpp"

#include "vseg/error.hpp"

namespace vseg {

Tensor dice_loss(const Tensor& pred, const LabelTensor& target, const LossConfig& config) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("dice_loss: prediction " + shape_to_string(pred.shape()) + " vs target " +
                     shape_to_string(target.shape()));
  }
  if (config.label_count < 1) throw ShapeError("dice_loss: label_count must be >= 1");
  if (pred.dim() < 2 || pred.size(1) != config.label_count) {
    throw ShapeError("dice_loss: prediction " + shape_to_string(pred.shape()) + " must have " +
                     std::to_string(config.label_count) + " label channel(s)");
  }
  std::vector<double> weights = config.class_weights;
  if (weights.empty()) weights.assign(config.label_count, 1.0);
  if (weights.size() != config.label_count) {
    throw ShapeError("dice_loss: " + std::to_string(weights.size()) + " class weights for " +
                     std::to_string(config.label_count) + " labels");
  }
  const std::size_t batch = pred.size(0);
  const std::size_t labels = config.label_count;
  const std::size_t spatial = pred.numel() / (batch * labels);
  const auto x = pred.data();
  const auto y = target.values();

  double intersection = 0.0, total = 0.0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t l = 0; l < labels; ++l) {
      const std::size_t base = (b * labels + l) * spatial;
      double inter_l = 0.0, total_l = 0.0;
      for (std::size_t i = 0; i < spatial; ++i) {
        inter_l += y[base + i] * x[base + i];
        total_l += y[base + i] + x[base + i];
      }
      intersection += weights[l] * inter_l;
      total += weights[l] * total_l;
    }
  const double eps = config.smooth_eps;
  const double num = 2.0 * intersection + eps;
  const double den = total + eps;

  auto p_impl = pred.impl();
  std::vector<std::uint8_t> labels_copy(y.begin(), y.end());
  return Tensor::make_result(
      {1}, {1.0 - num / den}, "dice_loss", {pred},
      [=, labels_copy = std::move(labels_copy)](const detail::TensorImpl& res) {
        const double g = res.grad[0];
        auto& gp = p_impl->grad;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t l = 0; l < labels; ++l) {
            const std::size_t base = (b * labels + l) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              const double dnum = 2.0 * weights[l] * labels_copy[base + i];
              gp[base + i] -= g * (dnum * den - num * weights[l]) / (den * den);
            }
          }
      });
}

}  // namespace vseg
