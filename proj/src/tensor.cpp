#include "vseg/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "vseg/error.hpp"

namespace vseg {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool enabled) { grad_mode_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
NoGradGuard::~NoGradGuard() { GradMode::set_enabled(previous_); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor of shape " + shape_to_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data(Shape{1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw GraphError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!impl_) throw GraphError("use of an undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw GraphError("use of an undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw GraphError("tensor has no gradient");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!impl_) throw GraphError("use of an undefined tensor");
  return impl_->ensure_grad();
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const { return from_data(shape(), impl_->data, false); }

Tensor Tensor::make_result(Shape shape, std::vector<double> data, std::string op_name,
                           std::vector<Tensor> inputs,
                           std::function<void(const detail::TensorImpl&)> backward) {
  Tensor out = from_data(std::move(shape), std::move(data), false);
  if (!GradMode::enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto fn = std::make_shared<detail::GradFn>();
  fn->name = std::move(op_name);
  for (auto& t : inputs) fn->inputs.push_back(t.impl_);
  fn->backward = std::move(backward);
  out.impl_->requires_grad = true;
  out.impl_->grad_fn = std::move(fn);
  return out;
}

void Tensor::backward() {
  if (!impl_) throw GraphError("backward on an undefined tensor");
  if (impl_->data.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_to_string(impl_->shape));
  }
  if (impl_->consumed) {
    throw GraphError("graph already consumed by a previous backward; run the forward pass again");
  }
  if (!impl_->requires_grad) throw GraphError("loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS gives a topological order (inputs before users).
  // `order` owns every node so releasing a grad_fn never frees a node that is
  // still to be visited.
  std::vector<std::shared_ptr<detail::TensorImpl>> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<std::shared_ptr<detail::TensorImpl>, std::size_t>> stack{{impl_, 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    const auto* fn = top.first->grad_fn.get();
    if (fn && top.second < fn->inputs.size()) {
      auto child = fn->inputs[top.second++];
      if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
      continue;
    }
    order.push_back(std::move(top.first));
    stack.pop_back();
  }

  impl_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node = it->get();
    if (!node->grad_fn) continue;
    if (node->grad.empty()) node->ensure_grad();
    for (auto& in : node->grad_fn->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    node->grad_fn->backward(*node);
    // Interior nodes: free the graph and the intermediate gradient.
    node->grad_fn.reset();
    node->consumed = true;
    if (node != impl_.get()) std::vector<double>().swap(node->grad);
  }
  impl_->consumed = true;
}

LabelTensor::LabelTensor(Shape shape, std::vector<std::uint8_t> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_numel(shape_) != values_.size()) {
    throw ShapeError("label tensor of shape " + shape_to_string(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] > 1) {
      throw ShapeError("label value " + std::to_string(values_[i]) + " at index " +
                       std::to_string(i) + " is not in {0,1}");
    }
  }
}

LabelTensor LabelTensor::zeros(Shape shape) {
  const auto n = shape_numel(shape);
  return LabelTensor(std::move(shape), std::vector<std::uint8_t>(n, 0));
}

std::size_t LabelTensor::count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

}  // namespace vseg
