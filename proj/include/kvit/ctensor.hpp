#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "kvit/error.hpp"

namespace kvit {

using Complex = std::complex<double>;
using Shape = std::vector<std::size_t>;

// Scalar complex field arithmetic. The tensor-level add/sub/mul/div in ops.hpp
// are the differentiable counterparts.
inline Complex cadd(Complex a, Complex b) { return {a.real() + b.real(), a.imag() + b.imag()}; }
inline Complex csub(Complex a, Complex b) { return {a.real() - b.real(), a.imag() - b.imag()}; }
inline Complex cmul(Complex a, Complex b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}
/// Throws DomainError when b is exactly zero.
Complex cdiv(Complex a, Complex b);

std::size_t shape_size(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<Complex> value;
  // Leaves: accumulated gradient. Intermediates: scratch owned by their tape.
  std::vector<Complex> grad;
  bool requires_grad = false;
  // Imaginary parts are identically zero; gradients are projected onto re.
  bool is_real = false;
  // Created outside any op (parameters, inputs, constants).
  bool leaf = true;
};

}  // namespace detail

/// Handle to an immutable complex array participating in reverse-mode
/// differentiation. Copies share the same storage.
///
/// Gradients follow the real-pair convention: grad[i] = dL/d(re) + i dL/d(im)
/// for a real loss L.
class ComplexTensor {
 public:
  ComplexTensor() = default;
  ComplexTensor(Shape shape, std::vector<Complex> values, bool requires_grad = false);

  static ComplexTensor zeros(Shape shape, bool requires_grad = false);
  /// Real-valued tensor: imaginary parts are pinned to zero.
  static ComplexTensor real(Shape shape, std::vector<double> values, bool requires_grad = false);
  static ComplexTensor scalar(Complex v, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const Complex> data() const { return node_->value; }
  Complex operator[](std::size_t i) const { return node_->value[i]; }
  Complex at(std::size_t r, std::size_t c) const;
  Complex item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_real() const { return node_->is_real; }
  bool is_leaf() const { return node_->leaf; }

  /// Empty until a backward pass reaches this tensor.
  std::span<const Complex> grad() const { return node_->grad; }
  void zero_grad();

  /// Writable storage of a leaf. Only legal between passes (optimizer steps,
  /// finite-difference probes, checkpoint loading).
  std::span<Complex> mutable_data();

  /// New constant leaf holding a copy of the values.
  ComplexTensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit ComplexTensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Define-by-run record of differentiable ops. Ops executed while a tape is
/// active (see Tape::Scope) append their backward closure here; closures run
/// in reverse order, so the recording order is already topological.
///
/// Leaf gradients are buffered per tape and added to the leaves on flush,
/// which lets several tapes run concurrently against the same parameters and
/// still reduce in a fixed order.
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  /// Tape receiving ops on this thread, or nullptr (inference mode).
  static Tape* active() noexcept;

  void record(Backward fn) { ops_.push_back(std::move(fn)); }
  std::size_t size() const noexcept { return ops_.size(); }

  /// Runs the reverse sweep from a scalar loss (seed dL/d(re loss) = 1) and
  /// accumulates into every reachable leaf that requires grad.
  void backward(const ComplexTensor& loss);
  /// Reverse sweep only; leaf gradients stay buffered until flush_leaf_grads().
  void backward_deferred(const ComplexTensor& loss);
  void flush_leaf_grads();

  /// Gradient buffer for a node, zero-initialised on first access.
  std::span<Complex> grad(detail::Node& node);
  bool has_grad(const detail::Node& node) const;

  void clear();

 private:
  std::vector<Backward> ops_;
  std::unordered_map<const detail::Node*, std::vector<Complex>> leaf_grads_;
  std::vector<const detail::Node*> leaf_order_;
};

}  // namespace kvit
