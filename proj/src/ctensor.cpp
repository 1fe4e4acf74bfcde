#include "kvit/ctensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace kvit {

Complex cdiv(Complex a, Complex b) {
  const double den = b.real() * b.real() + b.imag() * b.imag();
  if (den == 0.0) throw DomainError("cdiv: division by zero");
  return {(a.real() * b.real() + a.imag() * b.imag()) / den,
          (a.imag() * b.real() - a.real() * b.imag()) / den};
}

std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

ComplexTensor::ComplexTensor(Shape shape, std::vector<Complex> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("ComplexTensor: data length does not equal product of extents");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

ComplexTensor ComplexTensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return ComplexTensor(std::move(shape), std::vector<Complex>(n), requires_grad);
}

ComplexTensor ComplexTensor::real(Shape shape, std::vector<double> values, bool requires_grad) {
  std::vector<Complex> c(values.begin(), values.end());
  ComplexTensor t(std::move(shape), std::move(c), requires_grad);
  t.node_->is_real = true;
  return t;
}

ComplexTensor ComplexTensor::scalar(Complex v, bool requires_grad) {
  return ComplexTensor({}, {v}, requires_grad);
}

std::size_t ComplexTensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not 2D");
  return node_->shape[0];
}

std::size_t ComplexTensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor is not 2D");
  return node_->shape[1];
}

Complex ComplexTensor::at(std::size_t r, std::size_t c) const {
  return node_->value.at(r * cols() + c);
}

Complex ComplexTensor::item() const {
  if (size() != 1) throw ContractError("item(): tensor is not a scalar");
  return node_->value[0];
}

void ComplexTensor::zero_grad() { node_->grad.clear(); }

std::span<Complex> ComplexTensor::mutable_data() {
  if (!node_->leaf) throw ContractError("mutable_data(): only leaves may be modified");
  return node_->value;
}

ComplexTensor ComplexTensor::detach() const {
  ComplexTensor t(node_->shape, node_->value, false);
  t.node_->is_real = node_->is_real;
  return t;
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() noexcept { return g_active_tape; }

std::span<Complex> Tape::grad(detail::Node& node) {
  if (!node.leaf) {
    if (node.grad.empty()) node.grad.assign(node.value.size(), Complex{});
    return node.grad;
  }
  auto it = leaf_grads_.find(&node);
  if (it == leaf_grads_.end()) {
    it = leaf_grads_.emplace(&node, std::vector<Complex>(node.value.size())).first;
    leaf_order_.push_back(&node);
  }
  return it->second;
}

bool Tape::has_grad(const detail::Node& node) const {
  if (!node.leaf) return !node.grad.empty();
  return leaf_grads_.count(&node) != 0;
}

void Tape::backward_deferred(const ComplexTensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar");
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any tensor requiring grad");
  }
  auto seed = grad(*loss.node());
  seed[0] += Complex(1.0, 0.0);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(*this);
}

void Tape::flush_leaf_grads() {
  for (const detail::Node* key : leaf_order_) {
    // Recorded closures keep every input node alive until clear().
    auto* node = const_cast<detail::Node*>(key);
    if (!node->requires_grad) continue;
    const auto& buf = leaf_grads_.at(key);
    if (node->grad.empty()) node->grad.assign(node->value.size(), Complex{});
    for (std::size_t i = 0; i < buf.size(); ++i) {
      node->grad[i] += node->is_real ? Complex(buf[i].real(), 0.0) : buf[i];
    }
  }
  leaf_grads_.clear();
  leaf_order_.clear();
}

void Tape::backward(const ComplexTensor& loss) {
  backward_deferred(loss);
  flush_leaf_grads();
}

void Tape::clear() {
  ops_.clear();
  leaf_grads_.clear();
  leaf_order_.clear();
}

}  // namespace kvit
