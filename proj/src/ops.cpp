#include "kvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "kvit/rng.hpp"

namespace kvit {
namespace {

using NodePtr = std::shared_ptr<detail::Node>;

Tape* tracking_tape(std::initializer_list<const ComplexTensor*> inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return nullptr;
  for (const ComplexTensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

ComplexTensor make_result(Shape shape, std::vector<Complex> values, bool is_real, Tape* tape) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->is_real = is_real;
  if (tape != nullptr) {
    node->leaf = false;
    node->requires_grad = true;
  }
  return ComplexTensor(std::move(node));
}

bool wants(const NodePtr& n) { return n && n->requires_grad; }

// Gradient flowing into a real node carries no imaginary component.
inline Complex incoming(const detail::Node& out, Complex g) {
  return out.is_real ? Complex(g.real(), 0.0) : g;
}

inline Complex cm(Complex a, Complex b) { return cmul(a, b); }

void require_same_shape(const ComplexTensor& a, const ComplexTensor& b, const char* op) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(op) + ": operand shapes differ");
}

void require_2d(const ComplexTensor& a, const char* op) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a 2D tensor");
}

// Shared driver for ops whose backward is elementwise in the output gradient.
template <typename Forward, typename Backward>
ComplexTensor unary_elementwise(const ComplexTensor& a, bool out_real, Forward fwd, Backward bwd) {
  Tape* tape = tracking_tape({&a});
  std::vector<Complex> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  ComplexTensor result = make_result(a.shape(), std::move(out), out_real, tape);
  if (tape != nullptr) {
    NodePtr an = a.node(), on = result.node();
    tape->record([an, on, bwd](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      auto ga = t.grad(*an);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] += bwd(an->value[i], on->value[i], incoming(*on, go[i]));
      }
    });
  }
  return result;
}

template <typename F, typename DF>
ComplexTensor split_activation(const ComplexTensor& a, F f, DF df) {
  const bool real = a.is_real();
  return unary_elementwise(
      a, real,
      [f, real](Complex z) { return Complex(f(z.real()), real ? 0.0 : f(z.imag())); },
      [df, real](Complex z, Complex, Complex g) {
        return Complex(g.real() * df(z.real()), real ? 0.0 : g.imag() * df(z.imag()));
      });
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

ComplexTensor add(const ComplexTensor& a, const ComplexTensor& b) {
  require_same_shape(a, b, "add");
  Tape* tape = tracking_tape({&a, &b});
  std::vector<Complex> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cadd(a[i], b[i]);
  auto r = make_result(a.shape(), std::move(out), a.is_real() && b.is_real(), tape);
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), on = r.node();
    tape->record([an, bn, on](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      if (wants(an)) {
        auto ga = t.grad(*an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += incoming(*on, go[i]);
      }
      if (wants(bn)) {
        auto gb = t.grad(*bn);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += incoming(*on, go[i]);
      }
    });
  }
  return r;
}

ComplexTensor sub(const ComplexTensor& a, const ComplexTensor& b) {
  require_same_shape(a, b, "sub");
  Tape* tape = tracking_tape({&a, &b});
  std::vector<Complex> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = csub(a[i], b[i]);
  auto r = make_result(a.shape(), std::move(out), a.is_real() && b.is_real(), tape);
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), on = r.node();
    tape->record([an, bn, on](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      if (wants(an)) {
        auto ga = t.grad(*an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += incoming(*on, go[i]);
      }
      if (wants(bn)) {
        auto gb = t.grad(*bn);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= incoming(*on, go[i]);
      }
    });
  }
  return r;
}

ComplexTensor mul(const ComplexTensor& a, const ComplexTensor& b) {
  require_same_shape(a, b, "mul");
  Tape* tape = tracking_tape({&a, &b});
  std::vector<Complex> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cmul(a[i], b[i]);
  auto r = make_result(a.shape(), std::move(out), a.is_real() && b.is_real(), tape);
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), on = r.node();
    tape->record([an, bn, on](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      if (wants(an)) {
        auto ga = t.grad(*an);
        for (std::size_t i = 0; i < go.size(); ++i)
          ga[i] += cm(incoming(*on, go[i]), std::conj(bn->value[i]));
      }
      if (wants(bn)) {
        auto gb = t.grad(*bn);
        for (std::size_t i = 0; i < go.size(); ++i)
          gb[i] += cm(incoming(*on, go[i]), std::conj(an->value[i]));
      }
    });
  }
  return r;
}

ComplexTensor div(const ComplexTensor& a, const ComplexTensor& b) {
  require_same_shape(a, b, "div");
  Tape* tape = tracking_tape({&a, &b});
  std::vector<Complex> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cdiv(a[i], b[i]);
  auto r = make_result(a.shape(), std::move(out), a.is_real() && b.is_real(), tape);
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), on = r.node();
    tape->record([an, bn, on](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      for (std::size_t i = 0; i < go.size(); ++i) {
        const Complex g = incoming(*on, go[i]);
        const Complex inv_b = cdiv(Complex(1.0, 0.0), bn->value[i]);
        // d(a/b)/da = 1/b, d(a/b)/db = -(a/b)/b
        if (wants(an)) t.grad(*an)[i] += cm(g, std::conj(inv_b));
        if (wants(bn)) t.grad(*bn)[i] -= cm(g, std::conj(cm(on->value[i], inv_b)));
      }
    });
  }
  return r;
}

ComplexTensor scale(const ComplexTensor& a, Complex s) {
  const bool real = a.is_real() && s.imag() == 0.0;
  return unary_elementwise(
      a, real, [s](Complex z) { return cmul(z, s); },
      [s](Complex, Complex, Complex g) { return cmul(g, std::conj(s)); });
}

ComplexTensor add_row_vector(const ComplexTensor& x, const ComplexTensor& v) {
  require_2d(x, "add_row_vector");
  const std::size_t m = x.rows(), n = x.cols();
  if (v.size() != n) throw ShapeError("add_row_vector: vector length != columns");
  Tape* tape = tracking_tape({&x, &v});
  std::vector<Complex> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = cadd(x[i * n + j], v[j]);
  auto r = make_result(x.shape(), std::move(out), x.is_real() && v.is_real(), tape);
  if (tape) {
    NodePtr xn = x.node(), vn = v.node(), on = r.node();
    tape->record([xn, vn, on, m, n](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      if (wants(xn)) {
        auto gx = t.grad(*xn);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += incoming(*on, go[i]);
      }
      if (wants(vn)) {
        auto gv = t.grad(*vn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gv[j] += incoming(*on, go[i * n + j]);
      }
    });
  }
  return r;
}

ComplexTensor mul_row_vector(const ComplexTensor& x, const ComplexTensor& v) {
  require_2d(x, "mul_row_vector");
  const std::size_t m = x.rows(), n = x.cols();
  if (v.size() != n) throw ShapeError("mul_row_vector: vector length != columns");
  Tape* tape = tracking_tape({&x, &v});
  std::vector<Complex> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = cmul(x[i * n + j], v[j]);
  auto r = make_result(x.shape(), std::move(out), x.is_real() && v.is_real(), tape);
  if (tape) {
    NodePtr xn = x.node(), vn = v.node(), on = r.node();
    tape->record([xn, vn, on, m, n](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      if (wants(xn)) {
        auto gx = t.grad(*xn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            gx[i * n + j] += cm(incoming(*on, go[i * n + j]), std::conj(vn->value[j]));
      }
      if (wants(vn)) {
        auto gv = t.grad(*vn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            gv[j] += cm(incoming(*on, go[i * n + j]), std::conj(xn->value[i * n + j]));
      }
    });
  }
  return r;
}

ComplexTensor mul_col_vector(const ComplexTensor& x, const ComplexTensor& w) {
  require_2d(x, "mul_col_vector");
  const std::size_t m = x.rows(), n = x.cols();
  if (w.size() != m) throw ShapeError("mul_col_vector: vector length != rows");
  Tape* tape = tracking_tape({&x, &w});
  std::vector<Complex> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = cmul(x[i * n + j], w[i]);
  auto r = make_result(x.shape(), std::move(out), x.is_real() && w.is_real(), tape);
  if (tape) {
    NodePtr xn = x.node(), wn = w.node(), on = r.node();
    tape->record([xn, wn, on, m, n](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      if (wants(xn)) {
        auto gx = t.grad(*xn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            gx[i * n + j] += cm(incoming(*on, go[i * n + j]), std::conj(wn->value[i]));
      }
      if (wants(wn)) {
        auto gw = t.grad(*wn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            gw[i] += cm(incoming(*on, go[i * n + j]), std::conj(xn->value[i * n + j]));
      }
    });
  }
  return r;
}

ComplexTensor matmul(const ComplexTensor& a, const ComplexTensor& b, kernels::Op op_a,
                     kernels::Op op_b) {
  using kernels::Op;
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (op_a == Op::adjoint && op_b == Op::adjoint) {
    throw ShapeError("matmul: (adjoint, adjoint) is not supported");
  }
  const std::size_t m = op_a == Op::none ? a.rows() : a.cols();
  const std::size_t k = op_a == Op::none ? a.cols() : a.rows();
  const std::size_t kb = op_b == Op::none ? b.rows() : b.cols();
  const std::size_t n = op_b == Op::none ? b.cols() : b.rows();
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(k) + " vs " +
                     std::to_string(kb) + ")");
  }
  Tape* tape = tracking_tape({&a, &b});
  std::vector<Complex> out(m * n);
  kernels::gemm(op_a, op_b, a.data(), b.data(), out, {m, k, n}, false);
  auto r = make_result({m, n}, std::move(out), a.is_real() && b.is_real(), tape);
  if (tape) {
    NodePtr an = a.node(), bn = b.node(), on = r.node();
    tape->record([an, bn, on, op_a, op_b, m, k, n](Tape& t) {
      if (!t.has_grad(*on)) return;
      std::vector<Complex> go(t.grad(*on).begin(), t.grad(*on).end());
      if (on->is_real)
        for (auto& g : go) g = Complex(g.real(), 0.0);
      if (op_a == Op::none && op_b == Op::none) {
        // C = A B: gA = gC B^H, gB = A^H gC
        if (wants(an)) kernels::gemm(Op::none, Op::adjoint, go, bn->value, t.grad(*an), {m, n, k}, true);
        if (wants(bn)) kernels::gemm(Op::adjoint, Op::none, an->value, go, t.grad(*bn), {k, m, n}, true);
      } else if (op_a == Op::none) {
        // C = A B^H with B stored n×k: gA = gC B, gB = gC^H A
        if (wants(an)) kernels::gemm(Op::none, Op::none, go, bn->value, t.grad(*an), {m, n, k}, true);
        if (wants(bn)) kernels::gemm(Op::adjoint, Op::none, go, an->value, t.grad(*bn), {n, m, k}, true);
      } else {
        // C = A^H B with A stored k×m: gA = B gC^H, gB = A gC
        if (wants(an)) kernels::gemm(Op::none, Op::adjoint, bn->value, go, t.grad(*an), {k, n, m}, true);
        if (wants(bn)) kernels::gemm(Op::none, Op::none, an->value, go, t.grad(*bn), {k, m, n}, true);
      }
    });
  }
  return r;
}

ComplexTensor adjoint(const ComplexTensor& a) {
  require_2d(a, "adjoint");
  const std::size_t m = a.rows(), n = a.cols();
  Tape* tape = tracking_tape({&a});
  std::vector<Complex> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = std::conj(a[i * n + j]);
  auto r = make_result({n, m}, std::move(out), a.is_real(), tape);
  if (tape) {
    NodePtr an = a.node(), on = r.node();
    tape->record([an, on, m, n](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      auto ga = t.grad(*an);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += std::conj(incoming(*on, go[j * m + i]));
    });
  }
  return r;
}

ComplexTensor conjugate(const ComplexTensor& a) {
  return unary_elementwise(
      a, a.is_real(), [](Complex z) { return std::conj(z); },
      [](Complex, Complex, Complex g) { return std::conj(g); });
}

ComplexTensor real_part(const ComplexTensor& a) {
  return unary_elementwise(
      a, true, [](Complex z) { return Complex(z.real(), 0.0); },
      [](Complex, Complex, Complex g) { return Complex(g.real(), 0.0); });
}

ComplexTensor abs2(const ComplexTensor& a) {
  return unary_elementwise(
      a, true, [](Complex z) { return Complex(std::norm(z), 0.0); },
      [](Complex z, Complex, Complex g) { return 2.0 * g.real() * z; });
}

ComplexTensor readout_average(const ComplexTensor& a) {
  return unary_elementwise(
      a, true, [](Complex z) { return Complex(0.5 * (z.real() + z.imag()), 0.0); },
      [](Complex, Complex, Complex g) { return Complex(0.5 * g.real(), 0.5 * g.real()); });
}

ComplexTensor split_gelu(const ComplexTensor& a) {
  return split_activation(a, [](double x) { return gelu(x); }, [](double x) { return gelu_grad(x); });
}

ComplexTensor split_relu(const ComplexTensor& a) {
  return split_activation(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

ComplexTensor split_tanh(const ComplexTensor& a) {
  return split_activation(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

ComplexTensor split_sigmoid(const ComplexTensor& a) {
  return split_activation(
      a, [](double x) { return sigmoid(x); },
      [](double x) {
        const double s = sigmoid(x);
        return s * (1.0 - s);
      });
}

ComplexTensor softmax_rows(const ComplexTensor& a) {
  require_2d(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  Tape* tape = tracking_tape({&a});
  std::vector<Complex> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, a[i * n + j].real());
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(a[i * n + j].real() - mx);
      out[i * n + j] = Complex(e, 0.0);
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = Complex(out[i * n + j].real() / total, 0.0);
  }
  auto r = make_result(a.shape(), std::move(out), true, tape);
  if (tape) {
    NodePtr an = a.node(), on = r.node();
    tape->record([an, on, m, n](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      auto ga = t.grad(*an);
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += on->value[i * n + j].real() * go[i * n + j].real();
        for (std::size_t j = 0; j < n; ++j) {
          const double y = on->value[i * n + j].real();
          ga[i * n + j] += Complex(y * (go[i * n + j].real() - dot), 0.0);
        }
      }
    });
  }
  return r;
}

ComplexTensor layer_norm_rows(const ComplexTensor& x, double eps) {
  require_2d(x, "layer_norm_rows");
  const std::size_t m = x.rows(), n = x.cols();
  Tape* tape = tracking_tape({&x});
  std::vector<Complex> out(m * n);
  std::vector<double> inv_std(m);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < m; ++i) {
    Complex mu{};
    for (std::size_t j = 0; j < n; ++j) mu += x[i * n + j];
    mu *= inv_n;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += std::norm(x[i * n + j] - mu);
    var *= inv_n;
    const double s = 1.0 / std::sqrt(var + eps);
    inv_std[i] = s;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (x[i * n + j] - mu) * s;
  }
  auto r = make_result(x.shape(), std::move(out), x.is_real(), tape);
  if (tape) {
    NodePtr xn = x.node(), on = r.node();
    tape->record([xn, on, inv_std = std::move(inv_std), m, n, inv_n](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      auto gx = t.grad(*xn);
      std::vector<Complex> gc(n);
      for (std::size_t i = 0; i < m; ++i) {
        const double s = inv_std[i];
        // y = c*s with c = x - mu; dL/dc = s*g - (s^3 A / n) c, A = sum re(conj(g) c)
        // and c = y / s, so (s^3 A / n) c = (s^2 A / n) y.
        double a_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const Complex g = incoming(*on, go[i * n + j]);
          const Complex y = on->value[i * n + j];
          a_sum += g.real() * y.real() + g.imag() * y.imag();
        }
        // a_sum above equals s * A.
        const double coef = s * a_sum * inv_n;
        Complex gmean{};
        for (std::size_t j = 0; j < n; ++j) {
          const Complex g = incoming(*on, go[i * n + j]);
          gc[j] = s * g - coef * on->value[i * n + j];
          gmean += gc[j];
        }
        gmean *= inv_n;
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gc[j] - gmean;
      }
    });
  }
  return r;
}

ComplexTensor concat_rows(std::span<const ComplexTensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  bool real = true;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != n) throw ShapeError("concat_rows: column counts differ");
    m += p.rows();
    real = real && p.is_real();
    if (!tape) tape = tracking_tape({&p});
  }
  std::vector<Complex> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  auto r = make_result({m, n}, std::move(out), real, tape);
  if (tape) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    NodePtr on = r.node();
    tape->record([nodes, on](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      std::size_t offset = 0;
      for (const auto& pn : nodes) {
        if (wants(pn)) {
          auto gp = t.grad(*pn);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += incoming(*on, go[offset + i]);
        }
        offset += pn->value.size();
      }
    });
  }
  return r;
}

ComplexTensor concat_cols(std::span<const ComplexTensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  bool real = true;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
    n += p.cols();
    real = real && p.is_real();
    if (!tape) tape = tracking_tape({&p});
  }
  std::vector<Complex> out(m * n);
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < pc; ++j) out[i * n + c0 + j] = p[i * pc + j];
    c0 += pc;
  }
  auto r = make_result({m, n}, std::move(out), real, tape);
  if (tape) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    NodePtr on = r.node();
    tape->record([nodes, on, m, n](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      std::size_t c0 = 0;
      for (const auto& pn : nodes) {
        const std::size_t pc = pn->shape[1];
        if (wants(pn)) {
          auto gp = t.grad(*pn);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += incoming(*on, go[i * n + c0 + j]);
        }
        c0 += pc;
      }
    });
  }
  return r;
}

ComplexTensor slice_rows(const ComplexTensor& a, std::size_t begin, std::size_t count) {
  require_2d(a, "slice_rows");
  const std::size_t n = a.cols();
  if (begin + count > a.rows()) throw ShapeError("slice_rows: range out of bounds");
  Tape* tape = tracking_tape({&a});
  std::vector<Complex> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                           a.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  auto r = make_result({count, n}, std::move(out), a.is_real(), tape);
  if (tape) {
    NodePtr an = a.node(), on = r.node();
    tape->record([an, on, begin, n](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      auto ga = t.grad(*an);
      for (std::size_t i = 0; i < go.size(); ++i) ga[begin * n + i] += incoming(*on, go[i]);
    });
  }
  return r;
}

ComplexTensor slice_cols(const ComplexTensor& a, std::size_t begin, std::size_t count) {
  require_2d(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (begin + count > n) throw ShapeError("slice_cols: range out of bounds");
  Tape* tape = tracking_tape({&a});
  std::vector<Complex> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a[i * n + begin + j];
  auto r = make_result({m, count}, std::move(out), a.is_real(), tape);
  if (tape) {
    NodePtr an = a.node(), on = r.node();
    tape->record([an, on, begin, count, m, n](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      auto ga = t.grad(*an);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) ga[i * n + begin + j] += incoming(*on, go[i * count + j]);
    });
  }
  return r;
}

ComplexTensor reshape(const ComplexTensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) throw ShapeError("reshape: element count changes");
  ComplexTensor r = unary_elementwise(
      a, a.is_real(), [](Complex z) { return z; }, [](Complex, Complex, Complex g) { return g; });
  r.node()->shape = std::move(shape);
  return r;
}

ComplexTensor rotate_phase(const ComplexTensor& x, std::span<const double> positions,
                           std::span<const double> freqs, const ComplexTensor& log_scale,
                           std::size_t head) {
  require_2d(x, "rotate_phase");
  const std::size_t m = x.rows(), d = x.cols();
  if (positions.size() != m) throw ShapeError("rotate_phase: one position per row required");
  if (freqs.size() != d) throw ShapeError("rotate_phase: one frequency per column required");
  if (log_scale.defined() && head >= log_scale.size()) {
    throw ShapeError("rotate_phase: head index outside the scale vector");
  }
  const double s = log_scale.defined() ? std::exp(log_scale[head].real()) : 1.0;
  Tape* tape = tracking_tape({&x, &log_scale});
  std::vector<Complex> out(m * d);
  std::vector<Complex> phase(m * d);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double theta = positions[i] * s * freqs[j];
      phase[i * d + j] = Complex(std::cos(theta), std::sin(theta));
      out[i * d + j] = cmul(x[i * d + j], phase[i * d + j]);
    }
  }
  auto r = make_result(x.shape(), std::move(out), false, tape);
  if (tape) {
    NodePtr xn = x.node(), ln = log_scale.defined() ? log_scale.node() : nullptr, on = r.node();
    std::vector<double> pos(positions.begin(), positions.end());
    std::vector<double> fr(freqs.begin(), freqs.end());
    tape->record([xn, ln, on, phase = std::move(phase), pos = std::move(pos), fr = std::move(fr), s,
                  head, m, d](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      if (wants(xn)) {
        auto gx = t.grad(*xn);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += cmul(go[i], std::conj(phase[i]));
      }
      if (wants(ln)) {
        // dL/dtheta = re(conj(g) * i y) = -im(conj(g) y); dtheta/du = pos * freq * s
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            const Complex cy = cmul(std::conj(go[i * d + j]), on->value[i * d + j]);
            acc += -cy.imag() * pos[i] * fr[j] * s;
          }
        t.grad(*ln)[head] += Complex(acc, 0.0);
      }
    });
  }
  return r;
}

ComplexTensor dropout(const ComplexTensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw DomainError("dropout: rate must lie in [0, 1)");
  if (p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  for (auto& v : *mask) v = rng.bernoulli(p) ? 0.0 : keep_scale;
  std::vector<Complex> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * (*mask)[i];
  Tape* tape = tracking_tape({&x});
  auto r = make_result(x.shape(), std::move(out), x.is_real(), tape);
  if (tape) {
    NodePtr xn = x.node(), on = r.node();
    tape->record([xn, on, mask](Tape& t) {
      if (!t.has_grad(*on)) return;
      auto go = t.grad(*on);
      auto gx = t.grad(*xn);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += incoming(*on, go[i]) * (*mask)[i];
    });
  }
  return r;
}

ComplexTensor sum(const ComplexTensor& a) {
  Tape* tape = tracking_tape({&a});
  Complex total{};
  for (Complex z : a.data()) total += z;
  auto r = make_result({}, {total}, a.is_real(), tape);
  if (tape) {
    NodePtr an = a.node(), on = r.node();
    tape->record([an, on](Tape& t) {
      if (!t.has_grad(*on)) return;
      const Complex g = incoming(*on, t.grad(*on)[0]);
      auto ga = t.grad(*an);
      for (auto& v : ga) v += g;
    });
  }
  return r;
}

ComplexTensor mean(const ComplexTensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), Complex(1.0 / static_cast<double>(a.size()), 0.0));
}

ComplexTensor weighted_cross_entropy(const ComplexTensor& logits, std::size_t label,
                                     std::span<const double> weights) {
  const std::size_t c = logits.size();
  if (label >= c) throw DomainError("weighted_cross_entropy: label out of range");
  if (weights.size() != c) throw ShapeError("weighted_cross_entropy: one weight per class");
  for (double w : weights) {
    if (!(w > 0.0)) throw DomainError("weighted_cross_entropy: weights must be positive");
  }
  Tape* tape = tracking_tape({&logits});
  double mx = -INFINITY;
  for (std::size_t i = 0; i < c; ++i) mx = std::max(mx, logits[i].real());
  double z = 0.0;
  for (std::size_t i = 0; i < c; ++i) z += std::exp(logits[i].real() - mx);
  const double lse = mx + std::log(z);
  const double w = weights[label];
  const double loss = -w * (logits[label].real() - lse);
  auto r = make_result({}, {Complex(loss, 0.0)}, true, tape);
  if (tape) {
    NodePtr ln = logits.node(), on = r.node();
    tape->record([ln, on, label, w, lse, c](Tape& t) {
      if (!t.has_grad(*on)) return;
      const double g = t.grad(*on)[0].real();
      auto gl = t.grad(*ln);
      for (std::size_t i = 0; i < c; ++i) {
        const double p = std::exp(ln->value[i].real() - lse);
        gl[i] += Complex(g * w * (p - (i == label ? 1.0 : 0.0)), 0.0);
      }
    });
  }
  return r;
}

}  // namespace kvit
