#include "stablegrad/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "stablegrad/manifold_reg.hpp"
#include "stablegrad/util.hpp"

namespace stablegrad {

void AttackConfig::validate() const {
  if (eps < 0.0) throw std::domain_error("attack radius must be non-negative");
  if (steps < 1) throw std::domain_error("attack needs at least one step");
  if (restarts < 1) throw std::domain_error("attack needs at least one restart");
  if (!(step_size > 0.0)) throw std::domain_error("attack step size must be positive");
  if (clip && !(clip->first < clip->second)) {
    throw std::domain_error("clip range must satisfy lo < hi");
  }
}

namespace {

double attack_loss_at(const NetworkParams& params, std::span<const double> x, int label) {
  std::vector<double> logits = forward_values(params, x);
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double lse = 0.0;
  for (double v : logits) lse += std::exp(v - mx);
  return mx + std::log(lse) - logits[static_cast<std::size_t>(label)];
}

void project(std::vector<double>& x, std::span<const double> center, double eps,
             const std::optional<std::pair<double, double>>& clip) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = std::clamp(x[i], center[i] - eps, center[i] + eps);
    if (clip) x[i] = std::clamp(x[i], clip->first, clip->second);
  }
}

struct AttackOutcome {
  std::vector<double> best;   // highest-loss candidate over restarts
  double best_loss = 0.0;
  bool flipped = false;       // some restart's final iterate changed the argmax
};

// One full attack against `label`; flip detection compares the final iterate
// of every restart against `label` as the prediction to protect.
AttackOutcome run_attack(const NetworkParams& params, std::span<const double> x, int label,
                         const AttackConfig& cfg, std::uint64_t sample_seed) {
  AttackOutcome out;
  out.best.assign(x.begin(), x.end());
  if (cfg.clip) project(out.best, x, cfg.eps, cfg.clip);
  out.best_loss = attack_loss_at(params, out.best, label);
  if (cfg.eps == 0.0) return out;

  NetworkParams frozen = params.detached();
  std::vector<double> cur(x.size());
  for (int r = 0; r < cfg.restarts; ++r) {
    // nested restart seeds: restart r behaves identically whatever the total
    std::mt19937_64 rng(mix_seed(sample_seed, static_cast<std::uint64_t>(r)));
    std::uniform_real_distribution<double> unif(-cfg.eps, cfg.eps);
    for (std::size_t i = 0; i < x.size(); ++i) cur[i] = x[i] + unif(rng);
    project(cur, x, cfg.eps, cfg.clip);

    for (int step = 0; step < cfg.steps; ++step) {
      Tape tape;
      Tensor xt = Tensor::vector(cur, true);
      ForwardTrace trace = forward(tape, frozen, xt);
      Tensor loss = tape.softmax_cross_entropy(trace.output(), label);
      tape.backward(loss);
      auto g = xt.grad();
      for (std::size_t i = 0; i < cur.size(); ++i) {
        double sign = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
        cur[i] += cfg.step_size * sign;
      }
      project(cur, x, cfg.eps, cfg.clip);
    }

    std::vector<double> logits = forward_values(params, cur);
    if (static_cast<int>(argmax(logits)) != label) out.flipped = true;
    double loss = attack_loss_at(params, cur, label);
    if (loss > out.best_loss) {
      out.best_loss = loss;
      out.best = cur;
    }
  }
  return out;
}

}  // namespace

std::vector<double> pgd_step_direction(const NetworkParams& params, std::span<const double> x,
                                       int label) {
  Tape tape;
  Tensor xt = Tensor::vector(std::vector<double>(x.begin(), x.end()), true);
  ForwardTrace trace = forward(tape, params, xt);
  Tensor loss = tape.softmax_cross_entropy(trace.output(), label);
  tape.backward(loss);
  auto g = xt.grad();
  std::vector<double> dir(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    dir[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
  }
  return dir;
}

std::vector<double> pgd_attack(const NetworkParams& params, std::span<const double> x, int label,
                               const AttackConfig& cfg) {
  cfg.validate();
  return run_attack(params, x, label, cfg, cfg.seed).best;
}

EvalReport evaluate(const NetworkParams& params,
                    const std::vector<std::vector<double>>& inputs,
                    const std::vector<int>& labels, const AttackConfig& cfg, int threads) {
  cfg.validate();
  if (inputs.size() != labels.size()) {
    throw ShapeError("evaluate: " + std::to_string(inputs.size()) + " inputs vs " +
                     std::to_string(labels.size()) + " labels");
  }
  EvalReport report;
  report.n = inputs.size();
  report.samples.resize(inputs.size());

  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    SampleOutcome& s = report.samples[i];
    s.index = i;
    s.label = labels[i];
    std::vector<double> logits = forward_values(params, inputs[i]);
    s.predicted = static_cast<int>(argmax(logits));
    s.correct = s.predicted == s.label;

    // stability probe: attack the prediction itself (label-free)
    AttackOutcome attack =
        run_attack(params, inputs[i], s.predicted, cfg, mix_seed(cfg.seed, 0xa77ac4, i));
    s.stable = !attack.flipped;
    s.attack_loss = attack.best_loss;
    // robust iff stable and correct; for misclassified samples the clean
    // input is already adversarial
    s.robust = s.stable && s.correct;
  });

  std::size_t correct = 0, stable = 0, robust = 0;
  for (const SampleOutcome& s : report.samples) {
    if (s.robust != (s.stable && s.correct)) {
      throw ContractError("per-sample robust flag deviates from stable AND correct");
    }
    correct += s.correct ? 1 : 0;
    stable += s.stable ? 1 : 0;
    robust += s.robust ? 1 : 0;
  }
  if (report.n > 0) {
    double inv = 1.0 / static_cast<double>(report.n);
    report.clean_accuracy = static_cast<double>(correct) * inv;
    report.stability_rate = static_cast<double>(stable) * inv;
    report.robust_accuracy = static_cast<double>(robust) * inv;
  }
  return report;
}

EvalReport evaluate_split(const NetworkParams& params, const Dataset& data,
                          std::span<const std::size_t> indices, const AttackConfig& cfg,
                          int threads) {
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  inputs.reserve(indices.size());
  for (std::size_t idx : indices) {
    inputs.push_back(data.inputs[idx]);
    labels.push_back(data.labels[idx]);
  }
  return evaluate(params, inputs, labels, cfg, threads);
}

void write_eval_report_json(const EvalReport& report, const AttackConfig& cfg,
                            const std::string& config_hash, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open eval report for writing: " + path);
  nlohmann::ordered_json j;
  j["tool"] = "stablegrad v1";
  j["config_hash"] = config_hash;
  j["n"] = report.n;
  j["clean_accuracy"] = report.clean_accuracy;
  j["robust_accuracy"] = report.robust_accuracy;
  j["stability_metric"] = "PGD-stability (upper bound)";
  j["stability_rate"] = report.stability_rate;
  j["attack"] = {{"eps", cfg.eps},
                 {"steps", cfg.steps},
                 {"step_size", cfg.step_size},
                 {"restarts", cfg.restarts},
                 {"seed", cfg.seed}};
  if (cfg.clip) j["attack"]["clip"] = {cfg.clip->first, cfg.clip->second};
  out << j.dump(2) << "\n";
}

void write_eval_samples_csv(const EvalReport& report, const std::string& config_hash,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open eval CSV for writing: " + path);
  out << "# stablegrad v1 config=" << config_hash << "\n";
  // the stable column is the PGD upper bound on eps-stability
  out << "index,label,predicted,correct,stable_pgd_upper_bound,robust,attack_loss\n";
  for (const SampleOutcome& s : report.samples) {
    out << s.index << "," << s.label << "," << s.predicted << "," << (s.correct ? 1 : 0) << ","
        << (s.stable ? 1 : 0) << "," << (s.robust ? 1 : 0) << "," << format_double17(s.attack_loss)
        << "\n";
  }
}

}  // namespace stablegrad
