#include "stablegrad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "stablegrad/util.hpp"

namespace stablegrad {

void Schedule::validate() const {
  if (points.empty()) throw std::domain_error("schedule has no breakpoints");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i].value) || !std::isfinite(points[i].epoch)) {
      throw std::domain_error("schedule breakpoint is not finite");
    }
    if (i > 0 && !(points[i].epoch > points[i - 1].epoch)) {
      throw std::domain_error("schedule epochs must be strictly increasing");
    }
  }
}

double schedule_at(const Schedule& s, double epoch) {
  s.validate();
  const auto& pts = s.points;
  if (epoch <= pts.front().epoch) return pts.front().value;
  if (epoch >= pts.back().epoch) return pts.back().value;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (epoch <= pts[i].epoch) {
      double t = (epoch - pts[i - 1].epoch) / (pts[i].epoch - pts[i - 1].epoch);
      return pts[i - 1].value + t * (pts[i].value - pts[i - 1].value);
    }
  }
  return pts.back().value;
}

void TrainConfig::validate() const {
  lr.validate();
  eps.validate();
  gamma_i.validate();
  gamma_h.validate();
  if (gamma_k < 0.0) throw std::domain_error("gamma_k must be non-negative");
  for (const auto& s : {gamma_i, gamma_h, eps}) {
    for (const auto& p : s.points) {
      if (p.value < 0.0) throw std::domain_error("schedule values must be non-negative");
    }
  }
  if (!(alpha > 0.0)) throw std::domain_error("alpha must be positive");
  if (batch_size == 0) throw std::domain_error("batch size must be positive");
}

ObjectiveResult total_objective(Tape& tape, const NetworkParams& params,
                                const SampleBatch& batch, const TrainConfig& cfg, double epoch,
                                std::uint64_t pair_seed) {
  if (batch.inputs.empty() || batch.inputs.size() != batch.labels.size()) {
    throw ContractError("objective needs a non-empty batch with one label per input");
  }
  cfg.validate();
  double gamma_i = schedule_at(cfg.gamma_i, epoch);
  double gamma_h = schedule_at(cfg.gamma_h, epoch);
  double eps = schedule_at(cfg.eps, epoch);
  std::size_t b = batch.inputs.size();

  // classification term on the clean inputs
  Tensor ce_acc;
  for (std::size_t i = 0; i < b; ++i) {
    ForwardTrace trace = forward(tape, params, batch.inputs[i]);
    Tensor ce = tape.softmax_cross_entropy(trace.output(), batch.labels[i]);
    ce_acc = ce_acc.defined() ? tape.add(ce_acc, ce) : ce;
  }
  Tensor ce_mean = tape.scale(ce_acc, 1.0 / static_cast<double>(b));
  Tensor total = ce_mean;

  ObjectiveTerms terms;
  terms.cross_entropy = ce_mean.value();

  if (cfg.gamma_k > 0.0) {
    Tensor amb = ambient_loss(tape, params);
    terms.ambient = amb.value();
    total = tape.add(total, tape.scale(amb, cfg.gamma_k));
  }

  if (gamma_i > 0.0 || gamma_h > 0.0) {
    std::mt19937_64 pair_rng(pair_seed);
    std::vector<Tensor> outs_p, outs_m;
    Tensor ham_acc;
    outs_p.reserve(b);
    outs_m.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
      PerturbationPair pair = sample_pair(batch.inputs[i], eps, pair_rng);
      PairedForward pf = paired_forward_losses(tape, params, pair.x_plus, pair.x_minus,
                                               cfg.alpha);
      outs_p.push_back(pf.out_plus);
      outs_m.push_back(pf.out_minus);
      ham_acc = ham_acc.defined() ? tape.add(ham_acc, pf.hamming) : pf.hamming;
    }
    Tensor intr = intrinsic_loss(tape, outs_p, outs_m);
    Tensor ham = tape.scale(ham_acc, 1.0 / static_cast<double>(b));
    terms.intrinsic = intr.value();
    terms.hamming = ham.value();
    if (gamma_i > 0.0) total = tape.add(total, tape.scale(intr, gamma_i));
    if (gamma_h > 0.0) total = tape.add(total, tape.scale(ham, gamma_h));
  }

  terms.total = total.value();
  return ObjectiveResult{total, terms};
}

ObjectiveTerms train_step(NetworkParams& params, SgdState& state, const SampleBatch& batch,
                          const TrainConfig& cfg, double epoch, double lr,
                          std::uint64_t pair_seed) {
  Tape tape;
  ObjectiveResult obj = total_objective(tape, params, batch, cfg, epoch, pair_seed);
  tape.backward(obj.total);

  std::size_t n_params = params.weights.size() + params.biases.size();
  if (state.velocity.size() != n_params) {
    state.velocity.assign(n_params, {});
  }

  std::vector<Tensor> new_weights, new_biases;
  std::size_t slot = 0;
  auto update = [&](const Tensor& t) {
    auto v = t.values();
    auto g = t.grad();
    std::vector<double> nv(v.begin(), v.end());
    std::vector<double>& vel = state.velocity[slot++];
    if (cfg.momentum > 0.0) {
      if (vel.size() != nv.size()) vel.assign(nv.size(), 0.0);
      for (std::size_t i = 0; i < nv.size(); ++i) {
        vel[i] = cfg.momentum * vel[i] + g[i];
        nv[i] -= lr * vel[i];
      }
    } else {
      for (std::size_t i = 0; i < nv.size(); ++i) nv[i] -= lr * g[i];
    }
    return nv;
  };
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    const Tensor& w = params.weights[i];
    new_weights.push_back(
        Tensor::matrix(w.shape().rows(), w.shape().cols(), update(w), true));
    new_biases.push_back(Tensor::vector(update(params.biases[i]), true));
  }
  params.weights = std::move(new_weights);
  params.biases = std::move(new_biases);
  return obj.terms;
}

double accuracy(const NetworkParams& params, const Dataset& data,
                std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  std::size_t hits = 0;
  std::vector<std::vector<double>> batch;
  batch.reserve(indices.size());
  for (std::size_t idx : indices) batch.push_back(data.inputs[idx]);
  auto outs = forward_batch(params, batch);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (static_cast<int>(argmax(outs[i])) == data.labels[indices[i]]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

void write_metrics(const std::vector<EpochRecord>& log, const std::string& config_hash,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open metrics log for writing: " + path);
  nlohmann::ordered_json header;
  header["tool"] = "stablegrad v1";
  header["config_hash"] = config_hash;
  out << header.dump() << "\n";
  for (const EpochRecord& r : log) {
    nlohmann::ordered_json rec;
    rec["epoch"] = r.epoch;
    rec["lr"] = r.lr;
    rec["eps"] = r.eps;
    rec["gamma_i"] = r.gamma_i;
    rec["gamma_h"] = r.gamma_h;
    rec["loss"] = r.terms.total;
    rec["cross_entropy"] = r.terms.cross_entropy;
    rec["ambient"] = r.terms.ambient;
    rec["intrinsic"] = r.terms.intrinsic;
    rec["hamming"] = r.terms.hamming;
    rec["train_accuracy"] = r.train_accuracy;
    rec["test_accuracy"] = r.test_accuracy;
    out << rec.dump() << "\n";
  }
}

TrainResult train(const TrainConfig& cfg, const Dataset& data) {
  cfg.validate();
  if (data.size() == 0 || data.train_idx.empty()) {
    throw ContractError("training needs a non-empty train split");
  }

  std::vector<std::size_t> dims;
  dims.push_back(data.input_dim);
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(static_cast<std::size_t>(data.classes));

  TrainResult result;
  result.params = NetworkParams::he_init(dims, cfg.seed);
  SgdState state;

  bool emit = !cfg.out_dir.empty();
  std::filesystem::path out_dir(cfg.out_dir);
  if (emit) std::filesystem::create_directories(out_dir);

  std::vector<std::size_t> order(data.train_idx);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_d = static_cast<double>(epoch);
    double lr = schedule_at(cfg.lr, epoch_d);
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x54f1e, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    ObjectiveTerms mean;
    std::size_t steps = 0;
    ObjectiveTerms last_finite;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      SampleBatch batch;
      for (std::size_t i = start; i < stop; ++i) {
        batch.inputs.emplace_back(data.inputs[order[i]]);
        batch.labels.push_back(data.labels[order[i]]);
      }
      ObjectiveTerms terms =
          train_step(result.params, state, batch, cfg, epoch_d, lr,
                     mix_seed(cfg.seed, epoch, steps));
      if (!std::isfinite(terms.total)) {
        throw TrainingDiverged(
            "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
            std::to_string(steps) + "; last finite terms: ce=" +
            format_double17(last_finite.cross_entropy) + " ambient=" +
            format_double17(last_finite.ambient) + " intrinsic=" +
            format_double17(last_finite.intrinsic) + " hamming=" +
            format_double17(last_finite.hamming));
      }
      last_finite = terms;
      mean.cross_entropy += terms.cross_entropy;
      mean.ambient += terms.ambient;
      mean.intrinsic += terms.intrinsic;
      mean.hamming += terms.hamming;
      mean.total += terms.total;
      ++steps;
    }
    double inv = 1.0 / static_cast<double>(steps);
    mean.cross_entropy *= inv;
    mean.ambient *= inv;
    mean.intrinsic *= inv;
    mean.hamming *= inv;
    mean.total *= inv;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.eps = schedule_at(cfg.eps, epoch_d);
    rec.gamma_i = schedule_at(cfg.gamma_i, epoch_d);
    rec.gamma_h = schedule_at(cfg.gamma_h, epoch_d);
    rec.terms = mean;
    rec.train_accuracy = accuracy(result.params, data, data.train_idx);
    rec.test_accuracy = accuracy(result.params, data, data.test_idx);
    result.log.push_back(rec);

    if (emit && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(result.params,
                      (out_dir / ("checkpoint_epoch_" + std::to_string(epoch + 1) + ".txt"))
                          .string());
    }
  }

  if (emit) {
    save_checkpoint(result.params, (out_dir / "checkpoint.txt").string());
    write_metrics(result.log, cfg.config_hash, (out_dir / "metrics.jsonl").string());
  }
  return result;
}

}  // namespace stablegrad
