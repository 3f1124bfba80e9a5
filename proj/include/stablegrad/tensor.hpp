#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stablegrad/errors.hpp"

namespace stablegrad {

// 1-D ([n]) or 2-D ([r x c]) dense shape, row-major layout.
class Shape {
 public:
  explicit Shape(std::size_t n) : rank_(1), dims_{n, 1} {}
  Shape(std::size_t rows, std::size_t cols) : rank_(2), dims_{rows, cols} {}

  int rank() const { return rank_; }
  std::size_t size() const { return rank_ == 1 ? dims_[0] : dims_[0] * dims_[1]; }
  std::size_t rows() const { return dims_[0]; }
  std::size_t cols() const { return rank_ == 2 ? dims_[1] : 1; }
  std::size_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }

  bool operator==(const Shape& other) const {
    return rank_ == other.rank_ && dims_ == other.dims_;
  }
  std::string str() const;

 private:
  int rank_;
  std::array<std::size_t, 2> dims_;
};

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily by Tape::backward
  bool requires_grad = false;
  std::uint64_t node_id = 0;
  std::uint64_t reset_stamp = 0;  // last backward pass that zeroed grad

  TensorData(Shape s, std::vector<double> v, bool rg);
};
}  // namespace detail

// Immutable dense tensor handle. Values are fixed at construction; the
// gradient buffer is written by Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor vector(std::vector<double> v, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                       bool requires_grad = false);
  static Tensor zeros(const Shape& s, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const { return shape().size(); }
  std::span<const double> values() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const;
  double value() const;  // scalar access; ContractError if size != 1

  bool requires_grad() const;
  // Empty until a backward pass has touched this tensor.
  std::span<const double> grad() const;

  std::uint64_t node_id() const;

 private:
  std::shared_ptr<detail::TensorData> d_;
  friend class Tape;
};

enum class OpKind {
  Add,
  Sub,
  Mul,
  Relu,
  Tanh,
  Abs,
  Square,
  Sqrt,
  Scale,
  MatMul,
  Affine,
  Sum,
  SoftHammingNorm,
  SoftmaxCrossEntropy,
};

const char* op_kind_name(OpKind op);

// One recorded primitive: operands, output, op kind and immediates.
struct TapeEntry {
  OpKind op;
  Tensor a;
  Tensor b;       // undefined for unary ops
  Tensor c;       // Affine bias only
  Tensor out;
  double scalar = 0.0;         // Scale factor / SoftHammingNorm alpha
  int label = -1;              // SoftmaxCrossEntropy target
  std::vector<double> stash;   // SoftHammingNorm: forward tanh values
};

// Computation record for one forward expression. Append-only; backward
// walks entries in reverse append order exactly once. A Tape is confined
// to a single thread; independent tapes may run concurrently.
class Tape {
 public:
  Tensor matmul(const Tensor& a, const Tensor& b);

  // Fused w . x + b, numerically identical to add(matmul(w, x), b).
  Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);

  Tensor relu(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor abs(const Tensor& a);
  Tensor square(const Tensor& a);
  Tensor sqrt(const Tensor& a);
  Tensor scale(const Tensor& a, double c);

  Tensor sum(const Tensor& a);

  // Fused scalar sqrt(sum((tanh(alpha a_i) - tanh(alpha b_i))^2)), the l2
  // norm of the soft Hamming vector; derivative 0 at the zero vector.
  Tensor soft_hamming_norm(const Tensor& a, const Tensor& b, double alpha);

  // Numerically stable softmax cross-entropy against an integer label.
  // logits must be 1-D; label outside [0, len) raises DataError.
  Tensor softmax_cross_entropy(const Tensor& logits, int label);

  // Reverse-mode accumulation from a scalar root. Gradient buffers of every
  // tensor reachable through this record are zeroed first, then filled, so
  // repeated backward calls never see stale values. Gradients flow only into
  // tensors whose requires_grad flag (propagated through ops) is set.
  void backward(const Tensor& root);

  std::size_t size() const { return entries_.size(); }
  const TapeEntry& entry(std::size_t i) const { return entries_[i]; }

  // Re-runs every recorded primitive from its stored operands and checks the
  // recomputed outputs are bit-identical to the stored ones.
  bool replay_matches() const;

 private:
  Tensor record_unary(OpKind op, const Tensor& a, double scalar = 0.0);
  Tensor record_binary(OpKind op, const Tensor& a, const Tensor& b);

  std::vector<TapeEntry> entries_;
};

}  // namespace stablegrad
