#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stablegrad/tensor.hpp"

namespace stablegrad {

// Feedforward ReLU network parameters: layer dims d0..d_{n-1}, weight
// matrices A_i [d_i x d_{i-1}] and biases b_i [d_i] for i = 1..n-1.
// The final affine layer has no ReLU; outputs are logits.
struct NetworkParams {
  std::vector<std::size_t> layer_dims;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t affine_layers() const { return layer_dims.size() - 1; }
  std::size_t hidden_layers() const { return layer_dims.size() - 2; }

  void validate() const;

  // Zero-mean normal weights with variance 2/fan-in, biases zero.
  static NetworkParams he_init(const std::vector<std::size_t>& dims, std::uint64_t seed);
  static NetworkParams zeros(const std::vector<std::size_t>& dims);
  static NetworkParams from_tensors(std::vector<std::size_t> dims, std::vector<Tensor> weights,
                                    std::vector<Tensor> biases);

  // Same values with gradient tracking disabled (read-only evaluation copies).
  NetworkParams detached() const;
};

// One differentiable forward pass: input, pre-activations z_hat_1..z_hat_{n-1},
// post-activations z_1..z_{n-2}. The network output is the last pre-activation.
struct ForwardTrace {
  Tensor input;
  std::vector<Tensor> preacts;
  std::vector<Tensor> postacts;

  const Tensor& output() const { return preacts.back(); }
  std::size_t hidden_layers() const { return preacts.size() - 1; }
};

ForwardTrace forward(Tape& tape, const NetworkParams& params, const Tensor& x);
ForwardTrace forward(Tape& tape, const NetworkParams& params, std::span<const double> x);

// Tape-free forward pass returning just the output logits.
std::vector<double> forward_values(const NetworkParams& params, std::span<const double> x);

// Optional batched path: one matmul over the whole batch matrix. Must agree
// with the per-sample loop to 1e-12; checked in tests.
std::vector<std::vector<double>> forward_batch(const NetworkParams& params,
                                               std::span<const std::vector<double>> xs);

// Binary ReLU branch pattern, one bit per hidden unit; a tie z_hat = 0
// counts as inactive.
struct HammingPattern {
  std::vector<std::size_t> layer_sizes;
  std::vector<std::uint8_t> bits;  // concatenated over hidden layers

  std::size_t total_bits() const { return bits.size(); }
  bool operator==(const HammingPattern& other) const = default;
  bool operator<(const HammingPattern& other) const;
};

HammingPattern hamming_embedding(const ForwardTrace& trace);
// Fast tape-free path; identical bits to hamming_embedding(forward(...)).
HammingPattern hamming_pattern(const NetworkParams& params, std::span<const double> x);

std::size_t hamming_distance(const HammingPattern& a, const HammingPattern& b);

// Number of distinct activation patterns seen sampling [a, b] uniformly at
// `resolution` points (endpoints included). A lower bound on the true count.
std::size_t count_linear_regions_1d(const NetworkParams& params, std::span<const double> a,
                                    std::span<const double> b, std::size_t resolution);

// Versioned text checkpoint; values printed with 17 significant digits so
// that save/load round-trips exactly.
void save_checkpoint(const NetworkParams& params, const std::string& path);
NetworkParams load_checkpoint(const std::string& path);

}  // namespace stablegrad
