#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stablegrad/config.hpp"
#include "stablegrad/util.hpp"

namespace sg = stablegrad;
namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  int threads = 1;
};

sg::ConfigMap resolve_config(const CommonArgs& args) {
  sg::ConfigMap cfg;
  if (!args.config_path.empty()) cfg = sg::ConfigMap::parse_file(args.config_path);
  cfg.merge(sg::ConfigMap::parse_pairs(args.overrides));
  if (const char* env_seed = std::getenv("STABLEGRAD_SEED")) {
    cfg.set("seed", env_seed);
  }
  return cfg;
}

std::ofstream open_csv(const fs::path& path, const std::string& config_hash,
                       const std::string& columns) {
  std::ofstream out(path);
  if (!out) throw sg::DataError("cannot open output file: " + path.string());
  out << "# stablegrad v1 config=" << config_hash << "\n";
  out << columns << "\n";
  return out;
}

int cmd_train(const CommonArgs& args) {
  sg::ConfigMap cfg = resolve_config(args);
  std::string hash = cfg.hash();
  sg::DatasetSpec spec = sg::dataset_spec_from(cfg);
  sg::TrainConfig tc = sg::train_config_from(cfg);
  cfg.check_all_consumed();
  if (tc.out_dir.empty()) tc.out_dir = args.out_dir;
  tc.config_hash = hash;

  sg::Dataset data = sg::load_or_generate(spec);
  sg::TrainResult result = sg::train(tc, data);
  if (!result.log.empty()) {
    const sg::EpochRecord& last = result.log.back();
    std::cout << "trained " << tc.epochs << " epochs; final loss " << last.terms.total
              << ", train acc " << last.train_accuracy << ", test acc " << last.test_accuracy
              << "\n";
  } else {
    std::cout << "trained 0 epochs; checkpoint is the seeded initialization\n";
  }
  std::cout << "checkpoint: " << (fs::path(tc.out_dir) / "checkpoint.txt").string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  sg::ConfigMap cfg = resolve_config(args);
  std::string hash = cfg.hash();
  sg::DatasetSpec spec = sg::dataset_spec_from(cfg);
  sg::Dataset data = sg::load_or_generate(spec);
  sg::AttackConfig ac = sg::attack_config_from(cfg, data.image_like);
  std::string checkpoint = cfg.get_string("checkpoint", "");
  std::string split = cfg.get_string("eval.split", "test");
  cfg.check_all_consumed();
  if (checkpoint.empty()) throw sg::ConfigError("eval requires a checkpoint");

  sg::NetworkParams params = sg::load_checkpoint(checkpoint);
  std::span<const std::size_t> indices;
  std::vector<std::size_t> all;
  if (split == "test") {
    indices = data.test_idx;
  } else if (split == "train") {
    indices = data.train_idx;
  } else if (split == "all") {
    all.resize(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  } else {
    throw sg::ConfigError("eval.split must be test, train or all");
  }

  sg::EvalReport report = sg::evaluate_split(params, data, indices, ac, args.threads);
  fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);
  sg::write_eval_report_json(report, ac, hash, (out_dir / "eval_report.json").string());
  sg::write_eval_samples_csv(report, hash, (out_dir / "eval_samples.csv").string());
  std::cout << "n=" << report.n << " clean=" << report.clean_accuracy
            << " robust=" << report.robust_accuracy
            << " PGD-stability (upper bound)=" << report.stability_rate << "\n";
  return 0;
}

int cmd_laplacian_converge(const CommonArgs& args) {
  sg::ConfigMap cfg = resolve_config(args);
  std::string hash = cfg.hash();
  sg::ConvergenceConfig cc = sg::convergence_config_from(cfg);
  std::uint64_t num_seeds = cfg.get_u64("lap.num_seeds", 1);
  cfg.check_all_consumed();

  fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);
  auto out = open_csv(out_dir / "convergence.csv", hash, "manifold,N,eps,s,c,seed,discrepancy");
  for (std::uint64_t k = 0; k < num_seeds; ++k) {
    sg::ConvergenceConfig cell = cc;
    cell.seed = cc.seed + k;
    for (const sg::ConvergenceRow& row : sg::convergence_experiment(cell)) {
      out << row.manifold << "," << row.n << "," << sg::format_double17(row.eps) << ","
          << sg::format_double17(row.s) << "," << row.c << "," << row.seed << ","
          << sg::format_double17(row.discrepancy) << "\n";
    }
  }
  std::cout << "wrote " << (out_dir / "convergence.csv").string() << "\n";
  return 0;
}

int cmd_sparsify_audit(const CommonArgs& args) {
  sg::ConfigMap cfg = resolve_config(args);
  std::string hash = cfg.hash();
  sg::SparsifyAuditConfig sc = sg::sparsify_audit_config_from(cfg);
  cfg.check_all_consumed();

  sg::PointCloud cloud;
  if (!sc.cloud_path.empty()) {
    cloud = sg::load_cloud_csv(sc.cloud_path);
  } else {
    std::mt19937_64 rng(sg::mix_seed(sc.seed, 0xc1fd));
    std::normal_distribution<double> gauss(0.0, 1.0);
    cloud.dim = sc.dim;
    std::vector<double> p(sc.dim);
    for (std::size_t i = 0; i < sc.nodes; ++i) {
      for (double& v : p) v = gauss(rng);
      cloud.add_point(p);
    }
  }
  sg::WeightedGraph graph = sg::build_graph(cloud, sc.s, sg::Truncation::none());
  sg::LaplacianOperator lap(graph);

  std::mt19937_64 xrng(sg::mix_seed(sc.seed, 0xf00d));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(cloud.size());
  for (double& v : x) v = gauss(xrng);
  double dense_qform = lap.quadratic_form(x);

  fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);
  auto out = open_csv(out_dir / "sparsify_audit.csv", hash,
                      "m,reps,dense_qform,empirical_mean,std_error,z_score,empirical_var");
  for (std::size_t m : sc.m_grid) {
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t rep = 0; rep < sc.reps; ++rep) {
      sg::WeightedGraph sparse =
          sg::sparsify_by_edge_sampling(graph, m, sg::mix_seed(sc.seed, m, rep));
      double q = sg::LaplacianOperator(sparse).quadratic_form(x);
      sum += q;
      sum_sq += q * q;
    }
    double n = static_cast<double>(sc.reps);
    double mean = sum / n;
    double var = sum_sq / n - mean * mean;
    double se = std::sqrt(var / n);
    double z = se > 0.0 ? (mean - dense_qform) / se : 0.0;
    out << m << "," << sc.reps << "," << sg::format_double17(dense_qform) << ","
        << sg::format_double17(mean) << "," << sg::format_double17(se) << ","
        << sg::format_double17(z) << "," << sg::format_double17(var) << "\n";
  }
  std::cout << "wrote " << (out_dir / "sparsify_audit.csv").string() << "\n";
  return 0;
}

int cmd_regions(const CommonArgs& args) {
  sg::ConfigMap cfg = resolve_config(args);
  std::string hash = cfg.hash();
  sg::DatasetSpec spec = sg::dataset_spec_from(cfg);
  sg::RegionsConfig rc = sg::regions_config_from(cfg);
  cfg.check_all_consumed();
  if (rc.checkpoint.empty()) throw sg::ConfigError("regions requires a checkpoint");

  sg::NetworkParams params = sg::load_checkpoint(rc.checkpoint);
  sg::Dataset data = sg::load_or_generate(spec);
  if (data.test_idx.size() < 2) throw sg::DataError("need at least 2 test points");

  std::mt19937_64 rng(sg::mix_seed(rc.seed, 0x5e95));
  std::uniform_int_distribution<std::size_t> pick(0, data.test_idx.size() - 1);

  fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);
  auto out = open_csv(out_dir / "regions.csv", hash, "segment,i,j,resolution,regions");
  for (std::size_t seg = 0; seg < rc.segments; ++seg) {
    std::size_t a = data.test_idx[pick(rng)];
    std::size_t b = data.test_idx[pick(rng)];
    while (b == a) b = data.test_idx[pick(rng)];
    std::size_t regions = sg::count_linear_regions_1d(params, data.inputs[a], data.inputs[b],
                                                      rc.resolution);
    out << seg << "," << a << "," << b << "," << rc.resolution << "," << regions << "\n";
  }
  std::cout << "wrote " << (out_dir / "regions.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stablegrad: locally stable ReLU network training and Laplacian experiments"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&args](CLI::App* sub) {
    sub->add_option("-c,--config", args.config_path, "key = value config file");
    sub->add_option("--set", args.overrides, "config override key=value (repeatable)");
    sub->add_option("-o,--out", args.out_dir, "output directory");
    sub->add_option("--threads", args.threads, "worker thread cap");
  };

  CLI::App* train = app.add_subcommand("train", "train a model from a config");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "PGD evaluation of a checkpoint");
  add_common(eval);
  std::string eval_checkpoint, eval_dataset, eval_eps, eval_step_size;
  int eval_steps = -1, eval_restarts = -1;
  std::string eval_seed;
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file");
  eval->add_option("--dataset", eval_dataset, "dataset kind");
  eval->add_option("--eps", eval_eps, "attack radius (absolute or a/255)");
  eval->add_option("--steps", eval_steps, "PGD steps");
  eval->add_option("--restarts", eval_restarts, "PGD restarts");
  eval->add_option("--step-size", eval_step_size, "PGD step size (absolute or a/255)");
  eval->add_option("--seed", eval_seed, "attack seed");

  CLI::App* converge = app.add_subcommand("laplacian-converge",
                                          "resampled-Laplacian discrepancy grid");
  add_common(converge);

  CLI::App* audit = app.add_subcommand("sparsify-audit", "edge-sampling unbiasedness statistics");
  add_common(audit);

  CLI::App* regions = app.add_subcommand("regions", "linear-region counts along test segments");
  add_common(regions);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(args);
    if (eval->parsed()) {
      if (!eval_checkpoint.empty()) args.overrides.push_back("checkpoint=" + eval_checkpoint);
      if (!eval_dataset.empty()) args.overrides.push_back("dataset.kind=" + eval_dataset);
      if (!eval_eps.empty()) args.overrides.push_back("eval.eps=" + eval_eps);
      if (eval_steps >= 0) args.overrides.push_back("eval.steps=" + std::to_string(eval_steps));
      if (eval_restarts >= 0) {
        args.overrides.push_back("eval.restarts=" + std::to_string(eval_restarts));
      }
      if (!eval_step_size.empty()) args.overrides.push_back("eval.step_size=" + eval_step_size);
      if (!eval_seed.empty()) args.overrides.push_back("seed=" + eval_seed);
      return cmd_eval(args);
    }
    if (converge->parsed()) return cmd_laplacian_converge(args);
    if (audit->parsed()) return cmd_sparsify_audit(args);
    if (regions->parsed()) return cmd_regions(args);
  } catch (const sg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
