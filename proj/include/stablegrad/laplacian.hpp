#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stablegrad/errors.hpp"

namespace stablegrad {

// n points in R^d, row-major. Resampled clouds record which original
// sample each point perturbs.
struct PointCloud {
  std::size_t dim = 0;
  std::vector<double> coords;
  std::vector<std::size_t> parents;  // empty, or one entry per point

  std::size_t size() const { return dim == 0 ? 0 : coords.size() / dim; }
  std::span<const double> point(std::size_t i) const {
    return {coords.data() + i * dim, dim};
  }
  void add_point(std::span<const double> p);

  static PointCloud from_rows(const std::vector<std::vector<double>>& rows);
};

// One point per CSV row, comma-separated coordinates.
PointCloud load_cloud_csv(const std::string& path);
void save_cloud_csv(const PointCloud& cloud, const std::string& path);

double squared_distance(std::span<const double> x, std::span<const double> y);

// exp(-||x - y||^2 / s); 1 iff x == y.
double gaussian_kernel(std::span<const double> x, std::span<const double> y, double s);

struct Truncation {
  enum class Kind { None, Knn, Ball };
  Kind kind = Kind::None;
  std::size_t k = 0;
  double radius = 0.0;

  static Truncation none() { return {}; }
  static Truncation knn(std::size_t k) { return {Kind::Knn, k, 0.0}; }
  static Truncation ball(double r) { return {Kind::Ball, 0, r}; }
};

// Symmetric weight matrix with an ignored diagonal (no self-edges).
// Kernel-built graphs have weights in (0, 1]; edge-sampled sparsifications
// carry importance weights (total/m per draw) that may exceed 1.
class WeightedGraph {
 public:
  WeightedGraph(std::size_t n, double s);

  std::size_t size() const { return n_; }
  double kernel_scale() const { return s_; }
  double weight(std::size_t i, std::size_t j) const { return w_[i * n_ + j]; }
  void set_weight(std::size_t i, std::size_t j, double w);

  double total_weight() const;  // sum over unordered pairs i < j

  struct Edge {
    std::size_t i, j;
    double w;
  };
  std::vector<Edge> edges() const;  // positive-weight pairs, i < j

 private:
  std::size_t n_;
  double s_;
  std::vector<double> w_;
};

WeightedGraph build_graph(const PointCloud& cloud, double s, const Truncation& trunc);

// The pair (D, W) with Lambda = D - W. D_ii is the exact row sum of W,
// so Lambda row sums are identically zero.
class LaplacianOperator {
 public:
  explicit LaplacianOperator(const WeightedGraph& graph);

  std::size_t size() const { return graph_.size(); }
  double degree(std::size_t i) const { return degree_[i]; }
  double weight(std::size_t i, std::size_t j) const { return graph_.weight(i, j); }
  double entry(std::size_t i, std::size_t j) const {
    return i == j ? degree_[i] : -graph_.weight(i, j);
  }

  // f^T Lambda f computed from (D, W).
  double quadratic_form(std::span<const double> f) const;

 private:
  WeightedGraph graph_;
  std::vector<double> degree_;
};

// (1/N^2) sum_{i,j} ||f_i - f_j||^2 W_ij, computed directly from the weights.
double discrete_intrinsic_norm(std::span<const double> values, const WeightedGraph& graph);
double discrete_intrinsic_norm(const std::vector<std::vector<double>>& values,
                               const WeightedGraph& graph);

// m i.i.d. edge draws with probability proportional to weight; each draw
// contributes total/m so the sparsified weights are unbiased entrywise.
WeightedGraph sparsify_by_edge_sampling(const WeightedGraph& graph, std::size_t m,
                                        std::uint64_t seed);

enum class BallNorm { L2, Linf };

// n*c points, each drawn uniformly from the open eps-ball around its parent.
PointCloud resample_cloud(const PointCloud& cloud, double eps, std::size_t c, BallNorm norm,
                          std::uint64_t seed);

// Out-of-sample discrete operator:
//   L f(x) = (1/N) sum_i k_s(x, x_i) f(x) - (1/N) sum_i k_s(x, x_i) f(x_i)
double discrete_operator_apply(const PointCloud& cloud, double s, std::span<const double> f,
                               std::span<const double> x, double fx);

enum class ManifoldId { Circle, SwissRoll, TwoMoons };

ManifoldId manifold_from_name(const std::string& name);
std::string manifold_name(ManifoldId id);
std::size_t manifold_natural_dim(ManifoldId id);

// Uniform parameter-space samples; ambient_dim pads circle samples with
// zero coordinates (ignored for the other manifolds).
PointCloud sample_manifold(ManifoldId id, std::size_t n, std::mt19937_64& rng,
                           std::size_t ambient_dim = 0);

struct ProbeFunction {
  std::string name;
  std::vector<double> linear;  // empty for sin probe
  bool is_sin_x0 = false;

  double operator()(std::span<const double> x) const;
};

// Coordinate projections, one seeded random linear function, sin(x_0).
std::vector<ProbeFunction> convergence_test_functions(std::size_t dim, std::uint64_t seed);

struct ConvergenceConfig {
  ManifoldId manifold = ManifoldId::Circle;
  std::vector<std::size_t> n_grid;
  std::vector<double> eps_grid;
  std::size_t c = 2;
  double s = 0.5;
  std::size_t probes = 20;
  std::size_t ambient_dim = 0;
  std::uint64_t seed = 0;
};

struct ConvergenceRow {
  std::string manifold;
  std::size_t n;
  double eps;
  double s;
  std::size_t c;
  std::uint64_t seed;
  double discrepancy;
};

// For each (N, eps) grid cell: mean over test functions and probe points of
// |L f(x) - L_c f(x)|, L over the original samples and L_c over the
// c-resampled cloud. Requires eps^2 < s for every cell.
std::vector<ConvergenceRow> convergence_experiment(const ConvergenceConfig& cfg);

}  // namespace stablegrad
