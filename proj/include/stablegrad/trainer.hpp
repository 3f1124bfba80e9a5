#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stablegrad/dataset.hpp"
#include "stablegrad/manifold_reg.hpp"
#include "stablegrad/relu_net.hpp"

namespace stablegrad {

// Piecewise-linear schedule over epochs: linear interpolation between
// breakpoints, clamped to the end values outside the covered range.
struct Schedule {
  struct Breakpoint {
    double epoch;
    double value;
  };
  std::vector<Breakpoint> points;

  static Schedule constant(double v) { return Schedule{{{0.0, v}}}; }
  void validate() const;  // epochs strictly increasing, values finite
};

double schedule_at(const Schedule& s, double epoch);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::vector<std::size_t> hidden_dims = {64, 64};
  double gamma_k = 0.0;
  Schedule gamma_i = Schedule::constant(0.0);
  Schedule gamma_h = Schedule::constant(0.0);
  Schedule lr = Schedule::constant(0.01);
  Schedule eps = Schedule::constant(0.0);
  double alpha = 8.0;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::string out_dir;               // empty: no files written
  std::string config_hash = "0000000000000000";

  void validate() const;
};

struct ObjectiveTerms {
  double cross_entropy = 0.0;
  double ambient = 0.0;
  double intrinsic = 0.0;
  double hamming = 0.0;
  double total = 0.0;
};

struct ObjectiveResult {
  Tensor total;  // scalar, differentiable w.r.t. params
  ObjectiveTerms terms;
};

struct SampleBatch {
  std::vector<std::span<const double>> inputs;
  std::vector<int> labels;
};

// Cross-entropy on the clean batch plus the ambient, intrinsic and Hamming
// terms, weighted by the epoch's schedule values. Perturbation pairs are
// drawn fresh from pair_seed, so the result is a deterministic function of
// (params, batch, cfg, epoch, pair_seed).
ObjectiveResult total_objective(Tape& tape, const NetworkParams& params,
                                const SampleBatch& batch, const TrainConfig& cfg, double epoch,
                                std::uint64_t pair_seed);

// Momentum buffers for the SGD update, one per parameter tensor.
struct SgdState {
  std::vector<std::vector<double>> velocity;
};

// One SGD step over a batch: objective, backward, parameter update.
// Returns the term breakdown at the pre-update parameters.
ObjectiveTerms train_step(NetworkParams& params, SgdState& state, const SampleBatch& batch,
                          const TrainConfig& cfg, double epoch, double lr,
                          std::uint64_t pair_seed);

struct EpochRecord {
  std::size_t epoch;
  double lr;
  double eps;
  double gamma_i;
  double gamma_h;
  ObjectiveTerms terms;  // means over the epoch's steps
  double train_accuracy;
  double test_accuracy;
};

struct TrainResult {
  NetworkParams params;
  std::vector<EpochRecord> log;
};

// Plain SGD over shuffled minibatches; deterministic given cfg.seed. Writes
// metrics.jsonl and checkpoint.txt under cfg.out_dir when it is non-empty.
// Raises TrainingDiverged if the loss becomes non-finite.
TrainResult train(const TrainConfig& cfg, const Dataset& data);

double accuracy(const NetworkParams& params, const Dataset& data,
                std::span<const std::size_t> indices);

// JSON-lines metrics serialization (header record, then one record per epoch).
void write_metrics(const std::vector<EpochRecord>& log, const std::string& config_hash,
                   const std::string& path);

}  // namespace stablegrad
