#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "stablegrad/laplacian.hpp"
#include "stablegrad/util.hpp"

using namespace stablegrad;

namespace {

PointCloud random_cloud(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PointCloud cloud;
  cloud.dim = dim;
  std::vector<double> p(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : p) v = gauss(rng);
    cloud.add_point(p);
  }
  return cloud;
}

Eigen::MatrixXd dense_laplacian(const LaplacianOperator& lap) {
  std::size_t n = lap.size();
  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = lap.entry(i, j);
    }
  }
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("laplacian");

TEST_CASE("gaussian kernel examples") {
  std::vector<double> x{0.0, 0.0}, y{1.0, 0.0};
  CHECK(gaussian_kernel(x, x, 1.0) == 1.0);
  CHECK(gaussian_kernel(x, y, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(gaussian_kernel(x, y, 1.0) == doctest::Approx(0.367879).epsilon(1e-5));
  CHECK_THROWS_AS(gaussian_kernel(x, y, 0.0), std::domain_error);
  CHECK_THROWS_AS(gaussian_kernel(x, y, -1.0), std::domain_error);
  CHECK_THROWS_AS(gaussian_kernel(x, std::vector<double>{1.0}, 1.0), ShapeError);

  // monotone decreasing in distance
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> a{unif(rng), unif(rng)};
    std::vector<double> near{a[0] + 0.3, a[1]};
    std::vector<double> far{a[0] + 0.9, a[1]};
    CHECK(gaussian_kernel(a, near, 1.3) > gaussian_kernel(a, far, 1.3));
  }
}

TEST_CASE("graph construction examples") {
  // two identical points: single edge of weight 1
  PointCloud two = PointCloud::from_rows({{0.5, 0.5}, {0.5, 0.5}});
  WeightedGraph g2 = build_graph(two, 1.0, Truncation::none());
  CHECK(g2.weight(0, 1) == 1.0);
  CHECK(g2.weight(0, 0) == 0.0);
  CHECK(g2.edges().size() == 1);

  // collinear points at 0, 1, 2 with s = 1
  PointCloud line = PointCloud::from_rows({{0.0}, {1.0}, {2.0}});
  WeightedGraph g3 = build_graph(line, 1.0, Truncation::none());
  CHECK(g3.weight(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(g3.weight(1, 2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(g3.weight(0, 2) == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));

  // knn(1) keeps exactly the two unit edges (union symmetrization)
  WeightedGraph gk = build_graph(line, 1.0, Truncation::knn(1));
  CHECK(gk.weight(0, 1) > 0.0);
  CHECK(gk.weight(1, 2) > 0.0);
  CHECK(gk.weight(0, 2) == 0.0);
  CHECK(gk.edges().size() == 2);

  CHECK_THROWS_AS(build_graph(line, 1.0, Truncation::knn(3)), std::domain_error);
  CHECK_THROWS_AS(build_graph(line, 1.0, Truncation::ball(0.0)), std::domain_error);
  PointCloud one = PointCloud::from_rows({{0.0}});
  CHECK_THROWS_AS(build_graph(one, 1.0, Truncation::none()), std::domain_error);

  // ball truncation drops the long edge
  WeightedGraph gb = build_graph(line, 1.0, Truncation::ball(1.5));
  CHECK(gb.weight(0, 2) == 0.0);
  CHECK(gb.weight(0, 1) > 0.0);
}

TEST_CASE("laplacian row sums vanish and the operator is PSD (dense eigensolve oracle)") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PointCloud cloud = random_cloud(30, 3, seed);
    WeightedGraph g = build_graph(cloud, 2.0, Truncation::none());
    LaplacianOperator lap(g);

    for (std::size_t i = 0; i < lap.size(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < lap.size(); ++j) row += lap.entry(i, j);
      CHECK(std::fabs(row) < 1e-9);
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense_laplacian(lap));
    CHECK(solver.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("quadratic form equals the half-sum of weighted squared differences") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PointCloud cloud = random_cloud(30, 2, 900 + seed);
    WeightedGraph g = build_graph(cloud, 1.5, Truncation::none());
    LaplacianOperator lap(g);
    std::vector<double> f(cloud.size());
    for (double& v : f) v = gauss(rng);

    double direct = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (std::size_t j = 0; j < cloud.size(); ++j) {
        double d = f[i] - f[j];
        direct += d * d * g.weight(i, j);
      }
    }
    direct *= 0.5;
    CHECK(std::fabs(lap.quadratic_form(f) - direct) < 1e-9);
  }
}

TEST_CASE("discrete intrinsic norm examples and dense-matrix oracle") {
  // constant values vanish
  PointCloud cloud = random_cloud(12, 2, 3);
  WeightedGraph g = build_graph(cloud, 1.0, Truncation::none());
  CHECK(discrete_intrinsic_norm(std::vector<double>(12, 3.25), g) == 0.0);

  // 2 nodes at distance 1, f = (0, 1): e^{-1}/2
  PointCloud two = PointCloud::from_rows({{0.0}, {1.0}});
  WeightedGraph g2 = build_graph(two, 1.0, Truncation::none());
  double got = discrete_intrinsic_norm(std::vector<double>{0.0, 1.0}, g2);
  CHECK(got == doctest::Approx(std::exp(-1.0) / 2.0).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.18394).epsilon(1e-4));

  CHECK_THROWS_AS(discrete_intrinsic_norm(std::vector<double>{1.0}, g2), ShapeError);

  // equals 2/N^2 f^T Lambda f on random 20-node graphs
  std::mt19937_64 rng(10);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PointCloud c = random_cloud(20, 3, 50 + seed);
    WeightedGraph gr = build_graph(c, 2.0, Truncation::none());
    LaplacianOperator lap(gr);
    std::vector<double> f(20);
    for (double& v : f) v = gauss(rng);
    double want = 2.0 / (20.0 * 20.0) * lap.quadratic_form(f);
    CHECK(std::fabs(discrete_intrinsic_norm(f, gr) - want) < 1e-9);
  }

  // vector-valued version reduces to a sum of scalar norms
  std::vector<std::vector<double>> vec_values;
  std::vector<double> first, second;
  for (std::size_t i = 0; i < 12; ++i) {
    double a = gauss(rng), b = gauss(rng);
    vec_values.push_back({a, b});
    first.push_back(a);
    second.push_back(b);
  }
  double split = discrete_intrinsic_norm(first, g) + discrete_intrinsic_norm(second, g);
  CHECK(discrete_intrinsic_norm(vec_values, g) == doctest::Approx(split).epsilon(1e-12));
}

TEST_CASE("intrinsic norm is invariant under point relabeling") {
  PointCloud cloud = random_cloud(15, 2, 77);
  std::mt19937_64 rng(78);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> f(15);
  for (double& v : f) v = gauss(rng);
  WeightedGraph g = build_graph(cloud, 1.0, Truncation::none());
  double base = discrete_intrinsic_norm(f, g);

  std::vector<std::size_t> perm(15);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  PointCloud shuffled;
  shuffled.dim = 2;
  std::vector<double> pf(15);
  for (std::size_t i = 0; i < 15; ++i) {
    shuffled.add_point(cloud.point(perm[i]));
    pf[i] = f[perm[i]];
  }
  WeightedGraph pg = build_graph(shuffled, 1.0, Truncation::none());
  CHECK(discrete_intrinsic_norm(pf, pg) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("single-edge sparsification is exact for any m") {
  PointCloud two = PointCloud::from_rows({{0.0}, {1.0}});
  WeightedGraph g = build_graph(two, 1.0, Truncation::none());
  for (std::size_t m : {1, 3, 10}) {
    WeightedGraph sparse = sparsify_by_edge_sampling(g, m, 123);
    CHECK(sparse.weight(0, 1) == doctest::Approx(g.weight(0, 1)).epsilon(1e-12));
  }
}

TEST_CASE("sparsification rejects degenerate inputs") {
  WeightedGraph empty(3, 1.0);
  CHECK_THROWS_AS(sparsify_by_edge_sampling(empty, 4, 1), std::domain_error);
  PointCloud two = PointCloud::from_rows({{0.0}, {1.0}});
  WeightedGraph g = build_graph(two, 1.0, Truncation::none());
  CHECK_THROWS_AS(sparsify_by_edge_sampling(g, 0, 1), std::domain_error);
}

TEST_CASE("edge-sampled quadratic form is unbiased on the 3-edge line graph") {
  PointCloud line = PointCloud::from_rows({{0.0}, {1.0}, {2.0}});
  WeightedGraph g = build_graph(line, 1.0, Truncation::none());
  LaplacianOperator lap(g);
  std::vector<double> x{0.4, -1.3, 0.7};
  double want = lap.quadratic_form(x);

  const std::size_t reps = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    WeightedGraph sparse = sparsify_by_edge_sampling(g, 2, mix_seed(8812, rep));
    double q = LaplacianOperator(sparse).quadratic_form(x);
    sum += q;
    sum_sq += q * q;
  }
  double mean = sum / reps;
  double var = sum_sq / reps - mean * mean;
  double se = std::sqrt(var / reps);
  CHECK(std::fabs(mean - want) <= 3.0 * se);
}

TEST_CASE("sparsifier variance shrinks like 1/m") {
  PointCloud cloud = random_cloud(10, 2, 5);
  WeightedGraph g = build_graph(cloud, 1.0, Truncation::none());
  std::vector<double> x(10);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : x) v = gauss(rng);

  const std::size_t reps = 20000;
  auto variance_at = [&](std::size_t m) {
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      WeightedGraph sparse = sparsify_by_edge_sampling(g, m, mix_seed(m, rep));
      double q = LaplacianOperator(sparse).quadratic_form(x);
      sum += q;
      sum_sq += q * q;
    }
    double mean = sum / reps;
    return sum_sq / reps - mean * mean;
  };
  double v1 = variance_at(1);
  double v4 = variance_at(4);
  double v16 = variance_at(16);
  // ratios of 4 within a factor of 2
  CHECK(v1 / v4 > 2.0);
  CHECK(v1 / v4 < 8.0);
  CHECK(v4 / v16 > 2.0);
  CHECK(v4 / v16 < 8.0);
}

TEST_CASE("resampling examples and sampler audit") {
  PointCloud cloud = random_cloud(3, 2, 9);

  // degenerate radius: points equal parents within 1e-12
  PointCloud tiny = resample_cloud(cloud, 1e-12, 1, BallNorm::L2, 1);
  for (std::size_t i = 0; i < tiny.size(); ++i) {
    auto p = tiny.point(i);
    auto q = cloud.point(tiny.parents[i]);
    for (std::size_t d = 0; d < 2; ++d) CHECK(std::fabs(p[d] - q[d]) <= 1e-12);
  }

  // c = 2, n = 3: six points with parent multiset {0,0,1,1,2,2}
  PointCloud doubled = resample_cloud(cloud, 0.1, 2, BallNorm::Linf, 2);
  REQUIRE(doubled.size() == 6);
  std::vector<std::size_t> want{0, 0, 1, 1, 2, 2};
  std::vector<std::size_t> got = doubled.parents;
  std::sort(got.begin(), got.end());
  CHECK(got == want);

  // strict containment over many draws, both norms
  for (BallNorm norm : {BallNorm::L2, BallNorm::Linf}) {
    PointCloud big = resample_cloud(cloud, 0.25, 3334, norm, 3);
    REQUIRE(big.size() >= 10000);
    for (std::size_t i = 0; i < big.size(); ++i) {
      auto p = big.point(i);
      auto q = cloud.point(big.parents[i]);
      double l2 = 0.0, linf = 0.0;
      for (std::size_t d = 0; d < 2; ++d) {
        double diff = std::fabs(p[d] - q[d]);
        linf = std::max(linf, diff);
        l2 += diff * diff;
      }
      if (norm == BallNorm::L2) {
        CHECK(std::sqrt(l2) < 0.25);
      } else {
        CHECK(linf < 0.25);
      }
    }
  }

  CHECK_THROWS_AS(resample_cloud(cloud, 0.0, 1, BallNorm::L2, 1), std::domain_error);
  CHECK_THROWS_AS(resample_cloud(cloud, 0.1, 0, BallNorm::L2, 1), std::domain_error);
}

TEST_CASE("discrete operator: trivial identities and direct substitution") {
  PointCloud cloud = random_cloud(7, 2, 12);
  std::vector<double> f(7, 2.5);
  std::vector<double> x{0.1, -0.4};
  // constant f == fx annihilates exactly
  CHECK(discrete_operator_apply(cloud, 1.0, f, x, 2.5) == 0.0);

  // odd cancellation on {-1, +1} with f = identity at x = 0
  PointCloud pair = PointCloud::from_rows({{-1.0}, {1.0}});
  CHECK(discrete_operator_apply(pair, 1.0, std::vector<double>{-1.0, 1.0},
                                std::vector<double>{0.0}, 0.0) ==
        doctest::Approx(0.0).epsilon(1e-15));

  // cloud {0, 1}, s = 1, f = identity, x = 0 -> -e^{-1}/2
  PointCloud unit = PointCloud::from_rows({{0.0}, {1.0}});
  double got = discrete_operator_apply(unit, 1.0, std::vector<double>{0.0, 1.0},
                                       std::vector<double>{0.0}, 0.0);
  CHECK(got == doctest::Approx(-std::exp(-1.0) / 2.0).epsilon(1e-12));

  PointCloud empty;
  CHECK_THROWS_AS(
      discrete_operator_apply(empty, 1.0, std::vector<double>{}, std::vector<double>{0.0}, 0.0),
      std::domain_error);
  CHECK_THROWS_AS(
      discrete_operator_apply(unit, 1.0, std::vector<double>{1.0}, std::vector<double>{0.0}, 0.0),
      ShapeError);
}

TEST_CASE("convergence experiment: degenerate eps gives near-zero discrepancy") {
  ConvergenceConfig cfg;
  cfg.manifold = ManifoldId::Circle;
  cfg.n_grid = {50, 100};
  cfg.eps_grid = {1e-12};
  cfg.c = 2;
  cfg.s = 0.5;
  cfg.probes = 10;
  cfg.seed = 3;
  for (const ConvergenceRow& row : convergence_experiment(cfg)) {
    CHECK(row.discrepancy < 1e-8);
  }
}

TEST_CASE("convergence experiment rejects grid pairs violating eps^2 < s") {
  ConvergenceConfig cfg;
  cfg.n_grid = {50};
  cfg.eps_grid = {0.8};
  cfg.s = 0.5;
  CHECK_THROWS_WITH_AS(convergence_experiment(cfg), doctest::Contains("eps"),
                       std::domain_error);
}

TEST_CASE("discrepancy decreases with eps on a small circle grid") {
  ConvergenceConfig cfg;
  cfg.manifold = ManifoldId::Circle;
  cfg.n_grid = {200};
  cfg.eps_grid = {0.05, 0.2};
  cfg.c = 2;
  cfg.s = 0.5;
  cfg.probes = 15;
  cfg.seed = 11;
  auto rows = convergence_experiment(cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].eps == 0.05);
  CHECK(rows[0].discrepancy < rows[1].discrepancy);
}

TEST_CASE("manifold samplers produce the advertised shapes") {
  std::mt19937_64 rng(1);
  PointCloud circle = sample_manifold(ManifoldId::Circle, 64, rng);
  CHECK(circle.dim == 2);
  for (std::size_t i = 0; i < circle.size(); ++i) {
    auto p = circle.point(i);
    CHECK(p[0] * p[0] + p[1] * p[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  PointCloud padded = sample_manifold(ManifoldId::Circle, 8, rng, 5);
  CHECK(padded.dim == 5);
  for (std::size_t i = 0; i < padded.size(); ++i) CHECK(padded.point(i)[4] == 0.0);

  PointCloud roll = sample_manifold(ManifoldId::SwissRoll, 32, rng);
  CHECK(roll.dim == 3);
  PointCloud moons = sample_manifold(ManifoldId::TwoMoons, 32, rng);
  CHECK(moons.dim == 2);
}

TEST_CASE("point-cloud CSV round trip and malformed rows") {
  PointCloud cloud = random_cloud(9, 3, 44);
  auto path = std::filesystem::temp_directory_path() / "stablegrad_cloud_test.csv";
  save_cloud_csv(cloud, path.string());
  PointCloud back = load_cloud_csv(path.string());
  REQUIRE(back.size() == cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t d = 0; d < 3; ++d) CHECK(back.point(i)[d] == cloud.point(i)[d]);
  }
  std::filesystem::remove(path);

  auto bad = std::filesystem::temp_directory_path() / "stablegrad_cloud_bad.csv";
  {
    std::ofstream out(bad);
    out << "1.0,2.0\n1.0,oops\n";
  }
  CHECK_THROWS_WITH_AS(load_cloud_csv(bad.string()), doctest::Contains("line 2"), DataError);
  std::filesystem::remove(bad);
}

TEST_SUITE_END();
