#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kvit/ctensor.hpp"
#include "kvit/kernels.hpp"

namespace kvit {

class Rng;

// Elementwise, operands of identical shape.
ComplexTensor add(const ComplexTensor& a, const ComplexTensor& b);
ComplexTensor sub(const ComplexTensor& a, const ComplexTensor& b);
ComplexTensor mul(const ComplexTensor& a, const ComplexTensor& b);
/// Throws DomainError if any divisor element is exactly zero.
ComplexTensor div(const ComplexTensor& a, const ComplexTensor& b);
ComplexTensor scale(const ComplexTensor& a, Complex s);

// Row/column broadcasts on a 2D x[m×n].
ComplexTensor add_row_vector(const ComplexTensor& x, const ComplexTensor& v);  // + v[n] per row
ComplexTensor mul_row_vector(const ComplexTensor& x, const ComplexTensor& v);  // * v[n] per row
ComplexTensor mul_col_vector(const ComplexTensor& x, const ComplexTensor& w);  // * w[m] per column

/// op(A)·op(B) on 2D tensors; (adjoint, adjoint) is not supported.
ComplexTensor matmul(const ComplexTensor& a, const ComplexTensor& b,
                     kernels::Op op_a = kernels::Op::none, kernels::Op op_b = kernels::Op::none);
ComplexTensor adjoint(const ComplexTensor& a);
ComplexTensor conjugate(const ComplexTensor& a);

// Complex -> real maps (results are real tensors).
ComplexTensor real_part(const ComplexTensor& a);
ComplexTensor abs2(const ComplexTensor& a);
/// (re z + im z) / 2, the real readout of a complex logit.
ComplexTensor readout_average(const ComplexTensor& a);

// Split activations: f(re z) + i f(im z). Real inputs stay real.
ComplexTensor split_gelu(const ComplexTensor& a);
ComplexTensor split_relu(const ComplexTensor& a);
ComplexTensor split_tanh(const ComplexTensor& a);
ComplexTensor split_sigmoid(const ComplexTensor& a);

/// Row-wise softmax of the real parts of a 2D tensor; result is real.
ComplexTensor softmax_rows(const ComplexTensor& a);

/// Per row of x[m×n]: (x - mean) / sqrt(mean|x - mean|^2 + eps). No affine.
ComplexTensor layer_norm_rows(const ComplexTensor& x, double eps);

ComplexTensor concat_rows(std::span<const ComplexTensor> parts);
ComplexTensor concat_cols(std::span<const ComplexTensor> parts);
ComplexTensor slice_rows(const ComplexTensor& a, std::size_t begin, std::size_t count);
ComplexTensor slice_cols(const ComplexTensor& a, std::size_t begin, std::size_t count);
ComplexTensor reshape(const ComplexTensor& a, Shape shape);

/// y[m, j] = x[m, j] * exp(i * positions[m] * s * freqs[j]) on x[T×d].
/// s = exp(log_scale[head]) when log_scale is defined (a real tensor), else 1.
ComplexTensor rotate_phase(const ComplexTensor& x, std::span<const double> positions,
                           std::span<const double> freqs, const ComplexTensor& log_scale,
                           std::size_t head);

/// Inverted dropout. One Bernoulli draw per complex element: re and im are
/// kept or dropped together.
ComplexTensor dropout(const ComplexTensor& x, double p, Rng& rng);

ComplexTensor sum(const ComplexTensor& a);
ComplexTensor mean(const ComplexTensor& a);

/// -weights[label] * log softmax(re logits)[label], via log-sum-exp.
ComplexTensor weighted_cross_entropy(const ComplexTensor& logits, std::size_t label,
                                     std::span<const double> weights);

/// Gaussian error linear unit (erf form) and its derivative.
double gelu(double x);
double gelu_grad(double x);

}  // namespace kvit
