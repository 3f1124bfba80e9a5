#include "stablegrad/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>


namespace stablegrad {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};
std::atomic<std::uint64_t> g_backward_stamp{0};

void forward_values(OpKind op, std::span<const double> a, std::span<const double> b,
                    double scalar, int label, std::vector<double>& out) {
  switch (op) {
    case OpKind::Add:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
      break;
    case OpKind::Sub:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
      break;
    case OpKind::Mul:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
      break;
    case OpKind::Relu:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    case OpKind::Tanh:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
      break;
    case OpKind::Abs:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::fabs(a[i]);
      break;
    case OpKind::Square:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * a[i];
      break;
    case OpKind::Sqrt:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::sqrt(a[i]);
      break;
    case OpKind::Scale:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = scalar * a[i];
      break;
    case OpKind::Sum: {
      double acc = 0.0;
      for (double v : a) acc += v;
      out[0] = acc;
      break;
    }
    case OpKind::SoftHammingNorm: {
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        double u = std::tanh(scalar * a[i]) - std::tanh(scalar * b[i]);
        acc += u * u;
      }
      out[0] = std::sqrt(acc);
      break;
    }
    case OpKind::SoftmaxCrossEntropy: {
      double mx = a[0];
      for (double v : a) mx = std::max(mx, v);
      double lse = 0.0;
      for (double v : a) lse += std::exp(v - mx);
      out[0] = mx + std::log(lse) - a[static_cast<std::size_t>(label)];
      break;
    }
    case OpKind::MatMul:
    case OpKind::Affine:
      break;  // handled separately (needs shapes)
  }
}

void matmul_values(const Shape& sa, std::span<const double> a, const Shape& sb,
                   std::span<const double> b, std::vector<double>& out) {
  // 1-D left operand acts as a row vector, 1-D right operand as a column.
  std::size_t m = sa.rank() == 2 ? sa.rows() : 1;
  std::size_t k = sa.rank() == 2 ? sa.cols() : sa.rows();
  std::size_t n = sb.rank() == 2 ? sb.cols() : 1;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      out[i * n + j] = acc;
    }
  }
}

}  // namespace

std::string Shape::str() const {
  if (rank() == 1) return "[" + std::to_string(dims_[0]) + "]";
  return "[" + std::to_string(dims_[0]) + "x" + std::to_string(dims_[1]) + "]";
}

namespace detail {
TensorData::TensorData(Shape s, std::vector<double> v, bool rg)
    : shape(std::move(s)), value(std::move(v)), requires_grad(rg) {
  node_id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  if (shape.size() != value.size()) {
    throw ShapeError("tensor data length " + std::to_string(value.size()) +
                     " does not match shape " + shape.str());
  }
}
}  // namespace detail

Tensor Tensor::vector(std::vector<double> v, bool requires_grad) {
  Tensor t;
  Shape s(v.size());
  t.d_ = std::make_shared<detail::TensorData>(s, std::move(v), requires_grad);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                      bool requires_grad) {
  Tensor t;
  Shape s(rows, cols);
  t.d_ = std::make_shared<detail::TensorData>(s, std::move(v), requires_grad);
  return t;
}

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
  Tensor t;
  t.d_ = std::make_shared<detail::TensorData>(s, std::vector<double>(s.size(), 0.0),
                                              requires_grad);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor::vector({v}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!d_) throw ContractError("use of undefined tensor");
  return d_->shape;
}

std::span<const double> Tensor::values() const {
  if (!d_) throw ContractError("use of undefined tensor");
  return d_->value;
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return values()[r * shape().cols() + c];
}

double Tensor::value() const {
  if (size() != 1) {
    throw ContractError("scalar access on tensor of shape " + shape().str());
  }
  return values()[0];
}

bool Tensor::requires_grad() const { return d_ && d_->requires_grad; }

std::span<const double> Tensor::grad() const {
  if (!d_) throw ContractError("use of undefined tensor");
  return d_->grad;
}

std::uint64_t Tensor::node_id() const {
  if (!d_) throw ContractError("use of undefined tensor");
  return d_->node_id;
}

const char* op_kind_name(OpKind op) {
  switch (op) {
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Abs: return "abs";
    case OpKind::Square: return "square";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Scale: return "scale";
    case OpKind::MatMul: return "matmul";
    case OpKind::Affine: return "affine";
    case OpKind::Sum: return "sum";
    case OpKind::SoftHammingNorm: return "soft_hamming_norm";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "?";
}

Tensor Tape::record_unary(OpKind op, const Tensor& a, double scalar) {
  Shape out_shape = a.shape();
  std::size_t out_size = out_shape.size();
  if (op == OpKind::Sum) {
    out_shape = Shape(1);
    out_size = 1;
  }
  std::vector<double> out(out_size);
  forward_values(op, a.values(), {}, scalar, -1, out);
  Tensor result;
  result.d_ = std::make_shared<detail::TensorData>(out_shape, std::move(out),
                                                   a.requires_grad());
  entries_.push_back(TapeEntry{op, a, Tensor{}, Tensor{}, result, scalar, -1, {}});
  return result;
}

Tensor Tape::record_binary(OpKind op, const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(op_kind_name(op)) + ": operand shapes differ: " +
                     a.shape().str() + " vs " + b.shape().str());
  }
  std::vector<double> out(a.size());
  forward_values(op, a.values(), b.values(), 0.0, -1, out);
  Tensor result;
  result.d_ = std::make_shared<detail::TensorData>(a.shape(), std::move(out),
                                                   a.requires_grad() || b.requires_grad());
  entries_.push_back(TapeEntry{op, a, b, Tensor{}, result, 0.0, -1, {}});
  return result;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) { return record_binary(OpKind::Add, a, b); }
Tensor Tape::sub(const Tensor& a, const Tensor& b) { return record_binary(OpKind::Sub, a, b); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return record_binary(OpKind::Mul, a, b); }

Tensor Tape::relu(const Tensor& a) { return record_unary(OpKind::Relu, a); }
Tensor Tape::tanh(const Tensor& a) { return record_unary(OpKind::Tanh, a); }
Tensor Tape::abs(const Tensor& a) { return record_unary(OpKind::Abs, a); }
Tensor Tape::square(const Tensor& a) { return record_unary(OpKind::Square, a); }
Tensor Tape::sqrt(const Tensor& a) { return record_unary(OpKind::Sqrt, a); }
Tensor Tape::scale(const Tensor& a, double c) { return record_unary(OpKind::Scale, a, c); }
Tensor Tape::sum(const Tensor& a) { return record_unary(OpKind::Sum, a); }

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  std::size_t inner_a = sa.rank() == 2 ? sa.cols() : sa.rows();
  std::size_t inner_b = sb.rank() == 2 ? sb.rows() : sb.rows();
  if (inner_a != inner_b || (sa.rank() == 1 && sb.rank() == 1)) {
    throw ShapeError("matmul: incompatible shapes " + sa.str() + " and " + sb.str());
  }
  Shape out_shape = (sa.rank() == 2 && sb.rank() == 2) ? Shape(sa.rows(), sb.cols())
                    : sa.rank() == 2                   ? Shape(sa.rows())
                                                       : Shape(sb.cols());
  std::vector<double> out(out_shape.size());
  matmul_values(sa, a.values(), sb, b.values(), out);
  Tensor result;
  result.d_ = std::make_shared<detail::TensorData>(out_shape, std::move(out),
                                                   a.requires_grad() || b.requires_grad());
  entries_.push_back(TapeEntry{OpKind::MatMul, a, b, Tensor{}, result, 0.0, -1, {}});
  return result;
}

Tensor Tape::affine(const Tensor& w, const Tensor& x, const Tensor& b) {
  if (w.shape().rank() != 2 || x.shape().rank() != 1 || b.shape().rank() != 1 ||
      w.shape().cols() != x.shape().rows() || w.shape().rows() != b.shape().rows()) {
    throw ShapeError("affine: incompatible shapes " + w.shape().str() + ", " +
                     x.shape().str() + ", " + b.shape().str());
  }
  std::size_t rows = w.shape().rows();
  std::size_t cols = w.shape().cols();
  auto wv = w.values();
  auto xv = x.values();
  auto bv = b.values();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t t = 0; t < cols; ++t) acc += wv[r * cols + t] * xv[t];
    out[r] = acc + bv[r];
  }
  Tensor result;
  result.d_ = std::make_shared<detail::TensorData>(
      Shape(rows), std::move(out),
      w.requires_grad() || x.requires_grad() || b.requires_grad());
  entries_.push_back(TapeEntry{OpKind::Affine, w, x, b, result, 0.0, -1, {}});
  return result;
}

Tensor Tape::soft_hamming_norm(const Tensor& a, const Tensor& b, double alpha) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("soft_hamming_norm: operand shapes differ: " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  if (!(alpha > 0.0)) throw std::domain_error("alpha must be positive");
  std::size_t n = a.size();
  auto av = a.values();
  auto bv = b.values();
  // forward tanh values are kept for the backward rule
  std::vector<double> stash(2 * n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    stash[i] = std::tanh(alpha * av[i]);
    stash[n + i] = std::tanh(alpha * bv[i]);
    double u = stash[i] - stash[n + i];
    acc += u * u;
  }
  Tensor result;
  result.d_ = std::make_shared<detail::TensorData>(Shape(1),
                                                   std::vector<double>{std::sqrt(acc)},
                                                   a.requires_grad() || b.requires_grad());
  TapeEntry entry{OpKind::SoftHammingNorm, a, b, Tensor{}, result, alpha, -1, std::move(stash)};
  entries_.push_back(std::move(entry));
  return result;
}

Tensor Tape::softmax_cross_entropy(const Tensor& logits, int label) {
  if (logits.shape().rank() != 1) {
    throw ShapeError("softmax_cross_entropy: logits must be 1-D, got " +
                     logits.shape().str());
  }
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw DataError("label " + std::to_string(label) + " out of class range [0, " +
                    std::to_string(logits.size()) + ")");
  }
  std::vector<double> out(1);
  forward_values(OpKind::SoftmaxCrossEntropy, logits.values(), {}, 0.0, label, out);
  Tensor result;
  result.d_ = std::make_shared<detail::TensorData>(Shape(1), std::move(out),
                                                   logits.requires_grad());
  entries_.push_back(TapeEntry{OpKind::SoftmaxCrossEntropy, logits, Tensor{}, Tensor{}, result,
                               0.0, label, {}});
  return result;
}

void Tape::backward(const Tensor& root) {
  if (root.size() != 1) {
    throw ContractError("backward requires a scalar root, got shape " + root.shape().str());
  }

  // Zero every gradient buffer reachable through this record, then seed the
  // root. The stamp makes the reset a single pass without a visited set.
  const std::uint64_t stamp = g_backward_stamp.fetch_add(1, std::memory_order_relaxed) + 1;
  auto reset = [stamp](const Tensor& t) {
    if (!t.defined()) return;
    detail::TensorData* p = t.d_.get();
    if (!p->requires_grad || p->reset_stamp == stamp) return;
    p->grad.assign(p->value.size(), 0.0);
    p->reset_stamp = stamp;
  };
  for (const TapeEntry& e : entries_) {
    reset(e.a);
    reset(e.b);
    reset(e.c);
    reset(e.out);
  }
  reset(root);
  if (!root.requires_grad()) return;  // nothing depends on a differentiable leaf
  root.d_->grad[0] = 1.0;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const TapeEntry& e = *it;
    if (!e.out.requires_grad()) continue;
    std::span<const double> g = e.out.d_->grad;
    std::span<const double> av = e.a.values();
    std::vector<double>* ga = e.a.requires_grad() ? &e.a.d_->grad : nullptr;

    switch (e.op) {
      case OpKind::Add: {
        std::vector<double>* gb = e.b.requires_grad() ? &e.b.d_->grad : nullptr;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (ga) (*ga)[i] += g[i];
          if (gb) (*gb)[i] += g[i];
        }
        break;
      }
      case OpKind::Sub: {
        std::vector<double>* gb = e.b.requires_grad() ? &e.b.d_->grad : nullptr;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (ga) (*ga)[i] += g[i];
          if (gb) (*gb)[i] -= g[i];
        }
        break;
      }
      case OpKind::Mul: {
        std::vector<double>* gb = e.b.requires_grad() ? &e.b.d_->grad : nullptr;
        std::span<const double> bv = e.b.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (ga) (*ga)[i] += g[i] * bv[i];
          if (gb) (*gb)[i] += g[i] * av[i];
        }
        break;
      }
      case OpKind::Relu:
        if (ga) {
          // subgradient at 0 fixed to 0
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (av[i] > 0.0) (*ga)[i] += g[i];
          }
        }
        break;
      case OpKind::Tanh:
        if (ga) {
          std::span<const double> y = e.out.values();
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
        }
        break;
      case OpKind::Abs:
        if (ga) {
          // subgradient at 0 fixed to 0
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (av[i] > 0.0) (*ga)[i] += g[i];
            else if (av[i] < 0.0) (*ga)[i] -= g[i];
          }
        }
        break;
      case OpKind::Square:
        if (ga) {
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += 2.0 * av[i] * g[i];
        }
        break;
      case OpKind::Sqrt:
        if (ga) {
          // derivative pinned to 0 at the origin (l2-norm-at-zero convention)
          std::span<const double> y = e.out.values();
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (y[i] > 0.0) (*ga)[i] += g[i] / (2.0 * y[i]);
          }
        }
        break;
      case OpKind::Scale:
        if (ga) {
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += e.scalar * g[i];
        }
        break;
      case OpKind::Sum:
        if (ga) {
          for (std::size_t i = 0; i < av.size(); ++i) (*ga)[i] += g[0];
        }
        break;
      case OpKind::SoftHammingNorm: {
        std::vector<double>* gb = e.b.requires_grad() ? &e.b.d_->grad : nullptr;
        double z = e.out.values()[0];
        if (z > 0.0 && (ga || gb)) {
          double alpha = e.scalar;
          std::size_t n = av.size();
          for (std::size_t i = 0; i < n; ++i) {
            double ta = e.stash[i];
            double tb = e.stash[n + i];
            double u = ta - tb;
            if (ga) (*ga)[i] += g[0] * u * alpha * (1.0 - ta * ta) / z;
            if (gb) (*gb)[i] -= g[0] * u * alpha * (1.0 - tb * tb) / z;
          }
        }
        break;
      }
      case OpKind::SoftmaxCrossEntropy:
        if (ga) {
          double mx = av[0];
          for (double v : av) mx = std::max(mx, v);
          double lse = 0.0;
          for (double v : av) lse += std::exp(v - mx);
          for (std::size_t i = 0; i < av.size(); ++i) {
            double p = std::exp(av[i] - mx) / lse;
            (*ga)[i] += g[0] * (p - (static_cast<int>(i) == e.label ? 1.0 : 0.0));
          }
        }
        break;
      case OpKind::Affine: {
        // out = w.x + b with w = e.a, x = e.b, b = e.c
        std::vector<double>* gw = ga;
        std::vector<double>* gx = e.b.requires_grad() ? &e.b.d_->grad : nullptr;
        std::vector<double>* gbias = e.c.requires_grad() ? &e.c.d_->grad : nullptr;
        std::span<const double> xv = e.b.values();
        std::size_t rows = e.a.shape().rows();
        std::size_t cols = e.a.shape().cols();
        for (std::size_t r = 0; r < rows; ++r) {
          double gr = g[r];
          if (gbias) (*gbias)[r] += gr;
          if (gw) {
            for (std::size_t t = 0; t < cols; ++t) (*gw)[r * cols + t] += gr * xv[t];
          }
          if (gx) {
            for (std::size_t t = 0; t < cols; ++t) (*gx)[t] += gr * av[r * cols + t];
          }
        }
        break;
      }
      case OpKind::MatMul: {
        std::vector<double>* gb = e.b.requires_grad() ? &e.b.d_->grad : nullptr;
        const Shape& sa = e.a.shape();
        const Shape& sb = e.b.shape();
        std::span<const double> bv = e.b.values();
        std::size_t m = sa.rank() == 2 ? sa.rows() : 1;
        std::size_t k = sa.rank() == 2 ? sa.cols() : sa.rows();
        std::size_t n = sb.rank() == 2 ? sb.cols() : 1;
        // d/da = g . b^T ; d/db = a^T . g
        if (ga) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t t = 0; t < k; ++t) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[t * n + j];
              (*ga)[i * k + t] += acc;
            }
          }
        }
        if (gb) {
          for (std::size_t t = 0; t < k; ++t) {
            for (std::size_t j = 0; j < n; ++j) {
              double acc = 0.0;
              for (std::size_t i = 0; i < m; ++i) acc += av[i * k + t] * g[i * n + j];
              (*gb)[t * n + j] += acc;
            }
          }
        }
        break;
      }
    }
  }
}

bool Tape::replay_matches() const {
  for (const TapeEntry& e : entries_) {
    std::vector<double> out(e.out.size());
    if (e.op == OpKind::MatMul) {
      matmul_values(e.a.shape(), e.a.values(), e.b.shape(), e.b.values(), out);
    } else if (e.op == OpKind::Affine) {
      std::size_t rows = e.a.shape().rows();
      std::size_t cols = e.a.shape().cols();
      auto wv = e.a.values();
      auto xv = e.b.values();
      auto bv = e.c.values();
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t t = 0; t < cols; ++t) acc += wv[r * cols + t] * xv[t];
        out[r] = acc + bv[r];
      }
    } else {
      forward_values(e.op, e.a.values(), e.b.defined() ? e.b.values() : std::span<const double>{},
                     e.scalar, e.label, out);
    }
    std::span<const double> stored = e.out.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i] != stored[i]) return false;
    }
  }
  return true;
}

}  // namespace stablegrad
