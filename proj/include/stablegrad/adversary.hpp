#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stablegrad/dataset.hpp"
#include "stablegrad/relu_net.hpp"

namespace stablegrad {

// l-inf PGD budget: radius, iterations, step size, random restarts and an
// optional value clip range.
struct AttackConfig {
  double eps = 8.0 / 255.0;
  int steps = 20;
  double step_size = 2.0 / 255.0;
  int restarts = 10;
  std::optional<std::pair<double, double>> clip;
  std::uint64_t seed = 0;

  void validate() const;
};

// sign(grad_x of cross-entropy against `label`) at x.
std::vector<double> pgd_step_direction(const NetworkParams& params, std::span<const double> x,
                                       int label);

// Runs the full restart/step loop and returns the candidate with the highest
// attack loss. Every iterate stays inside the eps-ball and the clip range.
std::vector<double> pgd_attack(const NetworkParams& params, std::span<const double> x, int label,
                               const AttackConfig& cfg);

struct SampleOutcome {
  std::size_t index = 0;
  int label = 0;
  int predicted = 0;
  bool correct = false;
  bool stable = false;  // PGD upper bound on eps-stability
  bool robust = false;  // stable and correct
  double attack_loss = 0.0;
};

struct EvalReport {
  std::size_t n = 0;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double stability_rate = 0.0;  // labelled "PGD-stability (upper bound)" in outputs
  std::vector<SampleOutcome> samples;
};

// Per-sample: prediction, PGD attack against the predicted label (label-free
// stability probe), and the derived robust flag. The per-sample identity
// robust == stable && correct is asserted during aggregation.
EvalReport evaluate(const NetworkParams& params,
                    const std::vector<std::vector<double>>& inputs,
                    const std::vector<int>& labels, const AttackConfig& cfg, int threads = 1);

EvalReport evaluate_split(const NetworkParams& params, const Dataset& data,
                          std::span<const std::size_t> indices, const AttackConfig& cfg,
                          int threads = 1);

void write_eval_report_json(const EvalReport& report, const AttackConfig& cfg,
                            const std::string& config_hash, const std::string& path);
void write_eval_samples_csv(const EvalReport& report, const std::string& config_hash,
                            const std::string& path);

}  // namespace stablegrad
