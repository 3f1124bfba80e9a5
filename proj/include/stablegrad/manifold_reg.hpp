#pragma once

#include <random>
#include <span>
#include <vector>

#include "stablegrad/relu_net.hpp"
#include "stablegrad/tensor.hpp"

namespace stablegrad {

// An antipodal corner pair at radius eps: rho has every coordinate +-eps,
// x_plus = x + rho and x_minus = 2x - x_plus (exactly).
struct PerturbationPair {
  std::vector<double> x;
  std::vector<double> rho;
  std::vector<double> x_plus;
  std::vector<double> x_minus;
  double eps = 0.0;
};

// Loss weights for the combined objective.
struct RegWeights {
  double gamma_k = 0.0;
  double gamma_i = 0.0;
  double gamma_h = 0.0;
  double alpha = 8.0;

  void validate() const;
};

PerturbationPair sample_pair(std::span<const double> x, double eps, std::mt19937_64& rng);

// Batch mean of ||f(x_plus) - f(x_minus)||_2^2. The pairwise kernel weight
// is omitted; the corner distance is constant across pairs.
Tensor intrinsic_loss(Tape& tape, std::span<const Tensor> out_plus,
                      std::span<const Tensor> out_minus);
Tensor intrinsic_loss(Tape& tape, const Tensor& out_plus, const Tensor& out_minus);

// Elementwise |tanh(alpha z) - tanh(alpha y)|, in [0, 2).
Tensor soft_hamming(Tape& tape, const Tensor& z, const Tensor& y, double alpha);

// Per hidden layer l: v_l = ||soft_hamming(zhat_l+, zhat_l-)||_2 / (2 n_l);
// the loss is the layer mean, then the batch mean.
Tensor hamming_reg_loss(Tape& tape, const ForwardTrace& plus, const ForwardTrace& minus,
                        double alpha);
Tensor hamming_reg_loss(Tape& tape, std::span<const ForwardTrace> plus,
                        std::span<const ForwardTrace> minus, double alpha);

// Streaming form used by the trainer: both perturbed forwards advance
// layer-by-layer and the Hamming term accumulates as they go, so no list of
// pre-activations is kept.
struct PairedForward {
  Tensor out_plus;
  Tensor out_minus;
  Tensor hamming;  // scalar, equals hamming_reg_loss on the full traces
};

PairedForward paired_forward_losses(Tape& tape, const NetworkParams& params,
                                    std::span<const double> x_plus,
                                    std::span<const double> x_minus, double alpha);

// Sum of squared entries of every weight matrix and bias vector.
Tensor ambient_loss(Tape& tape, const NetworkParams& params);

}  // namespace stablegrad
