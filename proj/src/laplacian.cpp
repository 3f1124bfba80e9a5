#include "stablegrad/laplacian.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "stablegrad/util.hpp"

namespace stablegrad {

void PointCloud::add_point(std::span<const double> p) {
  if (dim == 0) dim = p.size();
  if (p.size() != dim) {
    throw ShapeError("point of dimension " + std::to_string(p.size()) +
                     " added to cloud of dimension " + std::to_string(dim));
  }
  coords.insert(coords.end(), p.begin(), p.end());
}

PointCloud PointCloud::from_rows(const std::vector<std::vector<double>>& rows) {
  PointCloud c;
  for (const auto& r : rows) c.add_point(r);
  return c;
}

PointCloud load_cloud_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open point-cloud CSV: " + path);
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used]))) {
          ++used;
        }
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": bad numeric field '" + field +
                        "' in " + path);
      }
    }
    if (row.empty()) {
      throw DataError("line " + std::to_string(line_no) + ": empty row in " + path);
    }
    if (cloud.dim != 0 && row.size() != cloud.dim) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(cloud.dim) + " fields, got " + std::to_string(row.size()));
    }
    cloud.add_point(row);
  }
  return cloud;
}

void save_cloud_csv(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open point-cloud CSV for writing: " + path);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto p = cloud.point(i);
    for (std::size_t d = 0; d < p.size(); ++d) {
      out << (d ? "," : "") << format_double17(p[d]);
    }
    out << "\n";
  }
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("points of dimension " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double s) {
  if (s <= 0.0) throw std::domain_error("kernel scale must be positive, got " + std::to_string(s));
  return std::exp(-squared_distance(x, y) / s);
}

WeightedGraph::WeightedGraph(std::size_t n, double s) : n_(n), s_(s), w_(n * n, 0.0) {}

void WeightedGraph::set_weight(std::size_t i, std::size_t j, double w) {
  if (i == j) return;  // no self-edges
  w_[i * n_ + j] = w;
  w_[j * n_ + i] = w;
}

double WeightedGraph::total_weight() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i + 1; j < n_; ++j) acc += w_[i * n_ + j];
  }
  return acc;
}

std::vector<WeightedGraph::Edge> WeightedGraph::edges() const {
  std::vector<Edge> es;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i + 1; j < n_; ++j) {
      double w = w_[i * n_ + j];
      if (w > 0.0) es.push_back({i, j, w});
    }
  }
  return es;
}

WeightedGraph build_graph(const PointCloud& cloud, double s, const Truncation& trunc) {
  std::size_t n = cloud.size();
  if (n < 2) throw std::domain_error("graph needs at least 2 points, got " + std::to_string(n));
  if (trunc.kind == Truncation::Kind::Knn && trunc.k >= n) {
    throw std::domain_error("knn truncation k=" + std::to_string(trunc.k) +
                            " must be < n=" + std::to_string(n));
  }
  if (trunc.kind == Truncation::Kind::Ball && trunc.radius <= 0.0) {
    throw std::domain_error("ball truncation radius must be positive");
  }

  WeightedGraph g(n, s);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      g.set_weight(i, j, gaussian_kernel(cloud.point(i), cloud.point(j), s));
    }
  }

  if (trunc.kind == Truncation::Kind::Ball) {
    double r2 = trunc.radius * trunc.radius;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (squared_distance(cloud.point(i), cloud.point(j)) > r2) g.set_weight(i, j, 0.0);
      }
    }
  } else if (trunc.kind == Truncation::Kind::Knn) {
    // keep an edge if either endpoint ranks it among its k nearest
    std::vector<std::vector<std::uint8_t>> keep(n, std::vector<std::uint8_t>(n, 0));
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < n; ++i) {
      order.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        order.emplace_back(squared_distance(cloud.point(i), cloud.point(j)), j);
      }
      std::sort(order.begin(), order.end());
      for (std::size_t t = 0; t < trunc.k; ++t) keep[i][order[t].second] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!keep[i][j] && !keep[j][i]) g.set_weight(i, j, 0.0);
      }
    }
  }
  return g;
}

LaplacianOperator::LaplacianOperator(const WeightedGraph& graph)
    : graph_(graph), degree_(graph.size(), 0.0) {
  std::size_t n = graph_.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += graph_.weight(i, j);
    degree_[i] = acc;
  }
}

double LaplacianOperator::quadratic_form(std::span<const double> f) const {
  std::size_t n = size();
  if (f.size() != n) {
    throw ShapeError("quadratic form over " + std::to_string(f.size()) + " values on " +
                     std::to_string(n) + " nodes");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = degree_[i] * f[i];
    for (std::size_t j = 0; j < n; ++j) row -= graph_.weight(i, j) * f[j];
    acc += f[i] * row;
  }
  return acc;
}

double discrete_intrinsic_norm(std::span<const double> values, const WeightedGraph& graph) {
  std::size_t n = graph.size();
  if (values.size() != n) {
    throw ShapeError("got " + std::to_string(values.size()) + " values for " +
                     std::to_string(n) + " nodes");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d = values[i] - values[j];
      acc += d * d * graph.weight(i, j);
    }
  }
  return acc / (static_cast<double>(n) * static_cast<double>(n));
}

double discrete_intrinsic_norm(const std::vector<std::vector<double>>& values,
                               const WeightedGraph& graph) {
  std::size_t n = graph.size();
  if (values.size() != n) {
    throw ShapeError("got " + std::to_string(values.size()) + " values for " +
                     std::to_string(n) + " nodes");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double w = graph.weight(i, j);
      if (w == 0.0) continue;
      if (values[i].size() != values[j].size()) {
        throw ShapeError("value vectors of length " + std::to_string(values[i].size()) +
                         " and " + std::to_string(values[j].size()));
      }
      double d2 = 0.0;
      for (std::size_t t = 0; t < values[i].size(); ++t) {
        double d = values[i][t] - values[j][t];
        d2 += d * d;
      }
      acc += d2 * w;
    }
  }
  return acc / (static_cast<double>(n) * static_cast<double>(n));
}

WeightedGraph sparsify_by_edge_sampling(const WeightedGraph& graph, std::size_t m,
                                        std::uint64_t seed) {
  if (m < 1) throw std::domain_error("edge sample count m must be >= 1");
  auto es = graph.edges();
  if (es.empty()) throw std::domain_error("cannot sparsify a graph with no positive-weight edges");

  double total = 0.0;
  std::vector<double> cdf(es.size());
  for (std::size_t e = 0; e < es.size(); ++e) {
    total += es[e].w;
    cdf[e] = total;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, total);
  std::vector<std::size_t> counts(es.size(), 0);
  for (std::size_t draw = 0; draw < m; ++draw) {
    double u = unif(rng);
    std::size_t e = static_cast<std::size_t>(
        std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (e >= es.size()) e = es.size() - 1;
    counts[e] += 1;
  }

  // each draw carries weight W_e / (m p_e) = total / m
  WeightedGraph out(graph.size(), graph.kernel_scale());
  double per_draw = total / static_cast<double>(m);
  for (std::size_t e = 0; e < es.size(); ++e) {
    if (counts[e] > 0) {
      out.set_weight(es[e].i, es[e].j, static_cast<double>(counts[e]) * per_draw);
    }
  }
  return out;
}

PointCloud resample_cloud(const PointCloud& cloud, double eps, std::size_t c, BallNorm norm,
                          std::uint64_t seed) {
  if (eps <= 0.0) throw std::domain_error("resample radius must be positive");
  if (c < 1) throw std::domain_error("resample count c must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-eps, eps);
  PointCloud out;
  out.dim = cloud.dim;
  out.coords.reserve(cloud.coords.size() * c);
  std::vector<double> delta(cloud.dim);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto parent = cloud.point(i);
    for (std::size_t j = 0; j < c; ++j) {
      // rejection-sample the open ball (strict ||delta|| < eps)
      for (;;) {
        bool ok = true;
        double norm2 = 0.0;
        for (std::size_t d = 0; d < cloud.dim; ++d) {
          delta[d] = unif(rng);
          if (std::fabs(delta[d]) >= eps) ok = false;
          norm2 += delta[d] * delta[d];
        }
        if (!ok) continue;
        if (norm == BallNorm::L2 && norm2 >= eps * eps) continue;
        break;
      }
      for (std::size_t d = 0; d < cloud.dim; ++d) delta[d] += parent[d];
      out.add_point(delta);
      out.parents.push_back(i);
      for (std::size_t d = 0; d < cloud.dim; ++d) delta[d] -= parent[d];
    }
  }
  return out;
}

double discrete_operator_apply(const PointCloud& cloud, double s, std::span<const double> f,
                               std::span<const double> x, double fx) {
  std::size_t n = cloud.size();
  if (n == 0) throw std::domain_error("discrete operator over an empty cloud");
  if (f.size() != n) {
    throw ShapeError("got " + std::to_string(f.size()) + " function values for " +
                     std::to_string(n) + " points");
  }
  double carry = 0.0;   // (1/N) sum k_s(x, x_i) f(x)
  double spread = 0.0;  // (1/N) sum k_s(x, x_i) f(x_i)
  for (std::size_t i = 0; i < n; ++i) {
    double k = gaussian_kernel(x, cloud.point(i), s);
    carry += k * fx;
    spread += k * f[i];
  }
  double inv_n = 1.0 / static_cast<double>(n);
  return carry * inv_n - spread * inv_n;
}

ManifoldId manifold_from_name(const std::string& name) {
  if (name == "circle") return ManifoldId::Circle;
  if (name == "swiss-roll") return ManifoldId::SwissRoll;
  if (name == "two-moons") return ManifoldId::TwoMoons;
  throw ConfigError("unknown manifold '" + name + "' (circle, swiss-roll, two-moons)");
}

std::string manifold_name(ManifoldId id) {
  switch (id) {
    case ManifoldId::Circle: return "circle";
    case ManifoldId::SwissRoll: return "swiss-roll";
    case ManifoldId::TwoMoons: return "two-moons";
  }
  return "?";
}

std::size_t manifold_natural_dim(ManifoldId id) {
  return id == ManifoldId::SwissRoll ? 3 : 2;
}

PointCloud sample_manifold(ManifoldId id, std::size_t n, std::mt19937_64& rng,
                           std::size_t ambient_dim) {
  std::size_t natural = manifold_natural_dim(id);
  std::size_t dim = std::max(ambient_dim, natural);
  if (id != ManifoldId::Circle && ambient_dim > natural) {
    throw std::domain_error("ambient padding is only supported for the circle manifold");
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PointCloud cloud;
  cloud.dim = dim;
  std::vector<double> p(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(p.begin(), p.end(), 0.0);
    switch (id) {
      case ManifoldId::Circle: {
        double theta = 2.0 * std::numbers::pi * unif(rng);
        p[0] = std::cos(theta);
        p[1] = std::sin(theta);
        break;
      }
      case ManifoldId::SwissRoll: {
        double t = 1.5 * std::numbers::pi * (1.0 + 2.0 * unif(rng));
        double h = 2.0 * unif(rng);
        p[0] = 0.1 * t * std::cos(t);
        p[1] = h;
        p[2] = 0.1 * t * std::sin(t);
        break;
      }
      case ManifoldId::TwoMoons: {
        double t = std::numbers::pi * unif(rng);
        if (i % 2 == 0) {
          p[0] = std::cos(t);
          p[1] = std::sin(t);
        } else {
          p[0] = 1.0 - std::cos(t);
          p[1] = 0.5 - std::sin(t);
        }
        break;
      }
    }
    cloud.add_point(p);
  }
  return cloud;
}

double ProbeFunction::operator()(std::span<const double> x) const {
  if (is_sin_x0) return std::sin(x[0]);
  double acc = 0.0;
  for (std::size_t i = 0; i < linear.size() && i < x.size(); ++i) acc += linear[i] * x[i];
  return acc;
}

std::vector<ProbeFunction> convergence_test_functions(std::size_t dim, std::uint64_t seed) {
  std::vector<ProbeFunction> fns;
  for (std::size_t d = 0; d < dim; ++d) {
    ProbeFunction f;
    f.name = "coord" + std::to_string(d);
    f.linear.assign(dim, 0.0);
    f.linear[d] = 1.0;
    fns.push_back(std::move(f));
  }
  {
    ProbeFunction f;
    f.name = "random_linear";
    std::mt19937_64 rng(mix_seed(seed, 0x11ea));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    f.linear.resize(dim);
    for (double& v : f.linear) v = unif(rng);
    fns.push_back(std::move(f));
  }
  {
    ProbeFunction f;
    f.name = "sin_x0";
    f.is_sin_x0 = true;
    fns.push_back(std::move(f));
  }
  return fns;
}

std::vector<ConvergenceRow> convergence_experiment(const ConvergenceConfig& cfg) {
  for (std::size_t n : cfg.n_grid) {
    for (double eps : cfg.eps_grid) {
      if (!(eps * eps < cfg.s)) {
        throw std::domain_error("grid pair (N=" + std::to_string(n) +
                                ", eps=" + std::to_string(eps) +
                                ") violates eps^2 < s with s=" + std::to_string(cfg.s));
      }
    }
  }
  if (cfg.c < 1) throw std::domain_error("resample count c must be >= 1");

  std::vector<ConvergenceRow> rows;
  for (std::size_t n : cfg.n_grid) {
    // one parent cloud and probe set per N, shared across the eps grid
    std::mt19937_64 parent_rng(mix_seed(cfg.seed, 0xc10d, n));
    PointCloud parents = sample_manifold(cfg.manifold, n, parent_rng, cfg.ambient_dim);
    PointCloud probes = sample_manifold(cfg.manifold, cfg.probes, parent_rng, cfg.ambient_dim);
    auto fns = convergence_test_functions(parents.dim, cfg.seed);

    std::vector<std::vector<double>> f_parent(fns.size(), std::vector<double>(n));
    for (std::size_t t = 0; t < fns.size(); ++t) {
      for (std::size_t i = 0; i < n; ++i) f_parent[t][i] = fns[t](parents.point(i));
    }

    for (std::size_t ei = 0; ei < cfg.eps_grid.size(); ++ei) {
      double eps = cfg.eps_grid[ei];
      PointCloud resampled =
          resample_cloud(parents, eps, cfg.c, BallNorm::L2, mix_seed(cfg.seed, n, ei));
      std::vector<std::vector<double>> f_res(fns.size(),
                                             std::vector<double>(resampled.size()));
      for (std::size_t t = 0; t < fns.size(); ++t) {
        for (std::size_t i = 0; i < resampled.size(); ++i) {
          f_res[t][i] = fns[t](resampled.point(i));
        }
      }

      double acc = 0.0;
      std::size_t count = 0;
      for (std::size_t pi = 0; pi < probes.size(); ++pi) {
        auto x = probes.point(pi);
        for (std::size_t t = 0; t < fns.size(); ++t) {
          double fx = fns[t](x);
          double l = discrete_operator_apply(parents, cfg.s, f_parent[t], x, fx);
          double lc = discrete_operator_apply(resampled, cfg.s, f_res[t], x, fx);
          acc += std::fabs(l - lc);
          ++count;
        }
      }
      rows.push_back({manifold_name(cfg.manifold), n, eps, cfg.s, cfg.c, cfg.seed,
                      acc / static_cast<double>(count)});
    }
  }
  return rows;
}

}  // namespace stablegrad
