#include "stablegrad/manifold_reg.hpp"

#include <cmath>

namespace stablegrad {

void RegWeights::validate() const {
  if (gamma_k < 0.0 || gamma_i < 0.0 || gamma_h < 0.0) {
    throw std::domain_error("regularization weights must be non-negative");
  }
  if (!(alpha > 0.0)) {
    throw std::domain_error("relaxation sharpness alpha must be positive");
  }
}

PerturbationPair sample_pair(std::span<const double> x, double eps, std::mt19937_64& rng) {
  if (eps < 0.0) throw std::domain_error("perturbation radius must be non-negative");
  PerturbationPair pair;
  pair.eps = eps;
  pair.x.assign(x.begin(), x.end());
  pair.rho.resize(x.size());
  pair.x_plus.resize(x.size());
  pair.x_minus.resize(x.size());
  std::uniform_int_distribution<int> coin(0, 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    pair.rho[i] = coin(rng) ? eps : -eps;
    pair.x_plus[i] = x[i] + pair.rho[i];
    pair.x_minus[i] = 2.0 * x[i] - pair.x_plus[i];
  }
  return pair;
}

Tensor intrinsic_loss(Tape& tape, std::span<const Tensor> out_plus,
                      std::span<const Tensor> out_minus) {
  if (out_plus.size() != out_minus.size() || out_plus.empty()) {
    throw ShapeError("intrinsic_loss: batch sizes " + std::to_string(out_plus.size()) +
                     " and " + std::to_string(out_minus.size()));
  }
  Tensor acc;
  for (std::size_t i = 0; i < out_plus.size(); ++i) {
    Tensor sq = tape.sum(tape.square(tape.sub(out_plus[i], out_minus[i])));
    acc = acc.defined() ? tape.add(acc, sq) : sq;
  }
  return tape.scale(acc, 1.0 / static_cast<double>(out_plus.size()));
}

Tensor intrinsic_loss(Tape& tape, const Tensor& out_plus, const Tensor& out_minus) {
  return intrinsic_loss(tape, std::span<const Tensor>(&out_plus, 1),
                        std::span<const Tensor>(&out_minus, 1));
}

Tensor soft_hamming(Tape& tape, const Tensor& z, const Tensor& y, double alpha) {
  if (!(alpha > 0.0)) throw std::domain_error("alpha must be positive");
  return tape.abs(tape.sub(tape.tanh(tape.scale(z, alpha)), tape.tanh(tape.scale(y, alpha))));
}

namespace {

// v_l for one layer, added onto acc (which may start undefined). The fused
// norm primitive computes ||soft_hamming(...)||_2 in one record entry.
Tensor accumulate_layer_hamming(Tape& tape, Tensor acc, const Tensor& pre_plus,
                                const Tensor& pre_minus, double alpha) {
  Tensor norm = tape.soft_hamming_norm(pre_plus, pre_minus, alpha);
  Tensor v = tape.scale(norm, 1.0 / (2.0 * static_cast<double>(pre_plus.size())));
  return acc.defined() ? tape.add(acc, v) : v;
}

}  // namespace

Tensor hamming_reg_loss(Tape& tape, const ForwardTrace& plus, const ForwardTrace& minus,
                        double alpha) {
  if (plus.preacts.size() != minus.preacts.size()) {
    throw ShapeError("hamming_reg_loss: traces have " + std::to_string(plus.preacts.size()) +
                     " and " + std::to_string(minus.preacts.size()) + " layers");
  }
  std::size_t hidden = plus.hidden_layers();
  if (hidden == 0) return Tensor::scalar(0.0);
  Tensor acc;
  for (std::size_t l = 0; l < hidden; ++l) {
    acc = accumulate_layer_hamming(tape, acc, plus.preacts[l], minus.preacts[l], alpha);
  }
  return tape.scale(acc, 1.0 / static_cast<double>(hidden));
}

Tensor hamming_reg_loss(Tape& tape, std::span<const ForwardTrace> plus,
                        std::span<const ForwardTrace> minus, double alpha) {
  if (plus.size() != minus.size() || plus.empty()) {
    throw ShapeError("hamming_reg_loss: batch sizes " + std::to_string(plus.size()) + " and " +
                     std::to_string(minus.size()));
  }
  Tensor acc;
  for (std::size_t i = 0; i < plus.size(); ++i) {
    Tensor one = hamming_reg_loss(tape, plus[i], minus[i], alpha);
    acc = acc.defined() ? tape.add(acc, one) : one;
  }
  return tape.scale(acc, 1.0 / static_cast<double>(plus.size()));
}

PairedForward paired_forward_losses(Tape& tape, const NetworkParams& params,
                                    std::span<const double> x_plus,
                                    std::span<const double> x_minus, double alpha) {
  if (x_plus.size() != params.input_dim() || x_minus.size() != params.input_dim()) {
    throw ShapeError("paired inputs of shape " + Shape(x_plus.size()).str() + "/" +
                     Shape(x_minus.size()).str() + " do not match d0 " +
                     Shape(params.input_dim()).str());
  }
  Tensor cur_p = Tensor::vector(std::vector<double>(x_plus.begin(), x_plus.end()));
  Tensor cur_m = Tensor::vector(std::vector<double>(x_minus.begin(), x_minus.end()));
  Tensor ham;
  for (std::size_t i = 0; i < params.affine_layers(); ++i) {
    Tensor pre_p = tape.affine(params.weights[i], cur_p, params.biases[i]);
    Tensor pre_m = tape.affine(params.weights[i], cur_m, params.biases[i]);
    if (i + 1 < params.affine_layers()) {
      ham = accumulate_layer_hamming(tape, ham, pre_p, pre_m, alpha);
      cur_p = tape.relu(pre_p);
      cur_m = tape.relu(pre_m);
    } else {
      cur_p = pre_p;
      cur_m = pre_m;
    }
  }
  PairedForward out;
  out.out_plus = cur_p;
  out.out_minus = cur_m;
  std::size_t hidden = params.hidden_layers();
  out.hamming = hidden == 0 ? Tensor::scalar(0.0)
                            : tape.scale(ham, 1.0 / static_cast<double>(hidden));
  return out;
}

Tensor ambient_loss(Tape& tape, const NetworkParams& params) {
  Tensor acc;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    Tensor w = tape.sum(tape.square(params.weights[i]));
    acc = acc.defined() ? tape.add(acc, w) : w;
    Tensor b = tape.sum(tape.square(params.biases[i]));
    acc = tape.add(acc, b);
  }
  if (!acc.defined()) return Tensor::scalar(0.0);
  return acc;
}

}  // namespace stablegrad
