#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vseg {

// Extents in row-major order; 5-D data is (batch, channel, z, y, x).
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorImpl;

// Recorded operation producing a tensor. `backward` reads the output's grad
// and accumulates into the grads of `inputs`.
struct GradFn {
  std::string name;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool consumed = false;
  std::shared_ptr<GradFn> grad_fn;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

// Graph recording switch. Recording is on by default; disabled inside a
// NoGradGuard scope (inference).
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense float64 tensor participating in the reverse-mode graph. Copies share
// storage; values are treated as immutable once an op has consumed them,
// except parameters updated by the optimizer between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const { return shape().at(axis); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Back-propagates from this scalar through the recorded graph. The graph is
  // consumed; calling backward again without a new forward pass throws.
  void backward();

  // Copy of the values with no graph attached.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

  // Builds an op result. The node is only recorded when grad mode is on and
  // some input requires grad.
  static Tensor make_result(Shape shape, std::vector<double> data, std::string op_name,
                            std::vector<Tensor> inputs,
                            std::function<void(const detail::TensorImpl&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Binary {0,1} label volume with the same layout as Tensor.
class LabelTensor {
 public:
  LabelTensor() = default;
  LabelTensor(Shape shape, std::vector<std::uint8_t> values);

  static LabelTensor zeros(Shape shape);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return values_.size(); }
  std::span<const std::uint8_t> values() const { return values_; }
  std::uint8_t operator[](std::size_t i) const { return values_[i]; }
  void set(std::size_t i, bool on) { values_[i] = on ? 1 : 0; }
  std::size_t count() const;

 private:
  Shape shape_;
  std::vector<std::uint8_t> values_;
};

}  // namespace vseg
