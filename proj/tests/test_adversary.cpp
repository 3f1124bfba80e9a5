#include <doctest.h>

#include <cmath>
#include <random>

#include "stablegrad/adversary.hpp"
#include "stablegrad/util.hpp"

using namespace stablegrad;

namespace {

// 2-class linear model: logits = A1 x + b1, no hidden layer
NetworkParams linear_model(const std::vector<double>& w0, const std::vector<double>& w1,
                           double b0 = 0.0, double b1 = 0.0) {
  std::vector<double> a;
  a.insert(a.end(), w0.begin(), w0.end());
  a.insert(a.end(), w1.begin(), w1.end());
  return NetworkParams::from_tensors(
      {w0.size(), 2}, {Tensor::matrix(2, w0.size(), a, true)},
      {Tensor::vector({b0, b1}, true)});
}

// exhaustive corner oracle for a linear model in 2-D: the prediction on the
// box is constant iff all 4 corners agree with the center prediction
bool corner_stable(const NetworkParams& params, const std::vector<double>& x, double eps) {
  auto pred_at = [&](const std::vector<double>& p) {
    return argmax(forward_values(params, p));
  };
  std::size_t center = pred_at(x);
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      std::vector<double> corner{x[0] + sx * eps, x[1] + sy * eps};
      if (pred_at(corner) != center) return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE_BEGIN("adversary");

TEST_CASE("attack config validation") {
  AttackConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  AttackConfig bad = cfg;
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  bad = cfg;
  bad.restarts = 0;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  bad = cfg;
  bad.step_size = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  bad = cfg;
  bad.eps = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  bad = cfg;
  bad.clip = {{1.0, 0.0}};
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
}

TEST_CASE("zero radius returns the clipped input") {
  NetworkParams p = linear_model({1.0, -2.0}, {0.5, 0.5});
  AttackConfig cfg;
  cfg.eps = 0.0;
  std::vector<double> x{0.25, 0.75};
  CHECK(pgd_attack(p, x, 0, cfg) == x);

  cfg.clip = {{0.0, 0.5}};
  std::vector<double> clipped = pgd_attack(p, x, 0, cfg);
  CHECK(clipped[0] == 0.25);
  CHECK(clipped[1] == 0.5);
}

TEST_CASE("step direction equals sign(w) for a linear two-class model") {
  // logit difference is w^T x with w = (3, -2); attacking the true label 1
  // ascends toward class 0, so the gradient sign equals sign(w)
  NetworkParams p = linear_model({3.0, -2.0}, {0.0, 0.0});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x{unif(rng), unif(rng)};
    std::vector<double> dir = pgd_step_direction(p, x, 1);
    CHECK(dir[0] == 1.0);
    CHECK(dir[1] == -1.0);
    std::vector<double> against = pgd_step_direction(p, x, 0);
    CHECK(against[0] == -1.0);
    CHECK(against[1] == 1.0);
  }
}

TEST_CASE("attack output stays inside the ball and the clip range") {
  NetworkParams p = NetworkParams::he_init({3, 8, 2}, 17);
  AttackConfig cfg;
  cfg.eps = 0.1;
  cfg.steps = 5;
  cfg.restarts = 3;
  cfg.step_size = 0.05;
  cfg.clip = {{0.0, 1.0}};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> x{unif(rng), unif(rng), unif(rng)};
    cfg.seed = static_cast<std::uint64_t>(rep);
    std::vector<double> adv = pgd_attack(p, x, rep % 2, cfg);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::fabs(adv[i] - x[i]) <= cfg.eps + 1e-12);
      CHECK(adv[i] >= 0.0);
      CHECK(adv[i] <= 1.0);
    }
  }
}

TEST_CASE("constant network is stable everywhere") {
  NetworkParams p = NetworkParams::zeros({2, 4, 2});
  std::vector<std::vector<double>> inputs{{0.1, 0.2}, {0.5, 0.9}, {-1.0, 2.0}};
  std::vector<int> labels{0, 1, 0};
  AttackConfig cfg;
  cfg.eps = 0.3;
  cfg.steps = 5;
  cfg.restarts = 2;
  cfg.step_size = 0.1;
  EvalReport report = evaluate(p, inputs, labels, cfg);
  CHECK(report.stability_rate == 1.0);
}

TEST_CASE("zero-radius evaluation: robust accuracy equals clean accuracy") {
  NetworkParams p = NetworkParams::he_init({2, 8, 2}, 21);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    inputs.push_back({unif(rng), unif(rng)});
    labels.push_back(i % 2);
  }
  AttackConfig cfg;
  cfg.eps = 0.0;
  EvalReport report = evaluate(p, inputs, labels, cfg);
  CHECK(report.stability_rate == 1.0);
  CHECK(report.robust_accuracy == report.clean_accuracy);
}

TEST_CASE("evaluation matches the exact corner oracle on a 2-D linear classifier") {
  NetworkParams p = linear_model({1.5, -0.75}, {-0.5, 1.0}, 0.1, -0.2);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unif(-1.5, 1.5);
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) {
    inputs.push_back({unif(rng), unif(rng)});
    labels.push_back(argmax(forward_values(p, inputs.back())) == 0 ? 0 : 1);
  }
  AttackConfig cfg;
  cfg.eps = 0.1;
  cfg.steps = 20;
  cfg.restarts = 10;
  cfg.step_size = cfg.eps / 8.0;
  cfg.seed = 7;
  EvalReport report = evaluate(p, inputs, labels, cfg);
  for (const SampleOutcome& s : report.samples) {
    CHECK(s.stable == corner_stable(p, inputs[s.index], cfg.eps));
  }
}

TEST_CASE("proposition-1 identity holds per sample with misclassified points present") {
  NetworkParams p = linear_model({2.0, 0.5}, {-1.0, 1.0});
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) {
    inputs.push_back({unif(rng), unif(rng)});
    labels.push_back(i % 2);  // deliberately half-wrong labels
  }
  AttackConfig cfg;
  cfg.eps = 0.05;
  cfg.steps = 10;
  cfg.restarts = 4;
  cfg.step_size = 0.01;
  EvalReport report = evaluate(p, inputs, labels, cfg);
  std::size_t robust = 0, stable = 0, correct = 0;
  for (const SampleOutcome& s : report.samples) {
    CHECK(s.robust == (s.stable && s.correct));
    robust += s.robust;
    stable += s.stable;
    correct += s.correct;
  }
  CHECK(report.robust_accuracy <= report.clean_accuracy);
  CHECK(report.robust_accuracy <= report.stability_rate);
  CHECK(report.clean_accuracy < 1.0);  // the mislabeling actually bites
}

TEST_CASE("robust accuracy is non-increasing in eps on a linear model") {
  NetworkParams p = linear_model({1.0, 1.0}, {-1.0, 0.5}, 0.05, -0.1);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) {
    inputs.push_back({unif(rng), unif(rng)});
    labels.push_back(argmax(forward_values(p, inputs.back())) == 0 ? 0 : 1);
  }
  double prev = 1.1;
  for (double eps : {0.0, 2.0 / 255.0, 4.0 / 255.0, 8.0 / 255.0}) {
    AttackConfig cfg;
    cfg.eps = eps;
    cfg.steps = 20;
    cfg.restarts = 5;
    cfg.step_size = std::max(eps / 8.0, 1e-3);
    cfg.seed = 10;
    EvalReport report = evaluate(p, inputs, labels, cfg);
    CHECK(report.robust_accuracy <= prev);
    prev = report.robust_accuracy;
  }
}

TEST_CASE("nested restart seeds: more restarts never lose attack successes") {
  NetworkParams p = NetworkParams::he_init({2, 12, 12, 2}, 33);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) {
    inputs.push_back({unif(rng), unif(rng)});
    labels.push_back(argmax(forward_values(p, inputs.back())) == 0 ? 0 : 1);
  }
  auto broken_set = [&](int restarts) {
    AttackConfig cfg;
    cfg.eps = 0.15;
    cfg.steps = 8;
    cfg.restarts = restarts;
    cfg.step_size = 0.03;
    cfg.seed = 12;
    EvalReport report = evaluate(p, inputs, labels, cfg);
    std::vector<bool> broken;
    for (const SampleOutcome& s : report.samples) broken.push_back(!s.stable);
    return broken;
  };
  std::vector<bool> with2 = broken_set(2);
  std::vector<bool> with6 = broken_set(6);
  for (std::size_t i = 0; i < with2.size(); ++i) {
    if (with2[i]) CHECK(with6[i]);
  }
}

TEST_CASE("parallel evaluation matches the single-threaded report") {
  NetworkParams p = NetworkParams::he_init({2, 10, 2}, 44);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  for (int i = 0; i < 24; ++i) {
    inputs.push_back({unif(rng), unif(rng)});
    labels.push_back(i % 2);
  }
  AttackConfig cfg;
  cfg.eps = 0.1;
  cfg.steps = 6;
  cfg.restarts = 3;
  cfg.step_size = 0.02;
  EvalReport serial = evaluate(p, inputs, labels, cfg, 1);
  EvalReport parallel = evaluate(p, inputs, labels, cfg, 4);
  CHECK(serial.robust_accuracy == parallel.robust_accuracy);
  CHECK(serial.stability_rate == parallel.stability_rate);
  for (std::size_t i = 0; i < serial.samples.size(); ++i) {
    CHECK(serial.samples[i].stable == parallel.samples[i].stable);
    CHECK(serial.samples[i].attack_loss == parallel.samples[i].attack_loss);
  }
}

TEST_SUITE_END();
