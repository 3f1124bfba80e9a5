#include "stablegrad/relu_net.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "stablegrad/util.hpp"

namespace stablegrad {

void NetworkParams::validate() const {
  if (layer_dims.size() < 2) {
    throw ContractError("network needs at least 2 layers, got " +
                        std::to_string(layer_dims.size()));
  }
  if (weights.size() != affine_layers() || biases.size() != affine_layers()) {
    throw ShapeError("expected " + std::to_string(affine_layers()) +
                     " weight/bias pairs, got " + std::to_string(weights.size()) + "/" +
                     std::to_string(biases.size()));
  }
  for (std::size_t i = 0; i < affine_layers(); ++i) {
    Shape expect(layer_dims[i + 1], layer_dims[i]);
    if (!(weights[i].shape() == expect)) {
      throw ShapeError("weight A" + std::to_string(i + 1) + " has shape " +
                       weights[i].shape().str() + ", expected " + expect.str());
    }
    if (!(biases[i].shape() == Shape(layer_dims[i + 1]))) {
      throw ShapeError("bias b" + std::to_string(i + 1) + " has shape " +
                       biases[i].shape().str() + ", expected " +
                       Shape(layer_dims[i + 1]).str());
    }
  }
}

NetworkParams NetworkParams::he_init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  NetworkParams p;
  p.layer_dims = dims;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    std::size_t fan_in = dims[i];
    std::size_t fan_out = dims[i + 1];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> w(fan_out * fan_in);
    for (double& v : w) v = dist(rng);
    p.weights.push_back(Tensor::matrix(fan_out, fan_in, std::move(w), true));
    p.biases.push_back(Tensor::vector(std::vector<double>(fan_out, 0.0), true));
  }
  p.validate();
  return p;
}

NetworkParams NetworkParams::zeros(const std::vector<std::size_t>& dims) {
  NetworkParams p;
  p.layer_dims = dims;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    p.weights.push_back(Tensor::zeros(Shape(dims[i + 1], dims[i]), true));
    p.biases.push_back(Tensor::zeros(Shape(dims[i + 1]), true));
  }
  p.validate();
  return p;
}

NetworkParams NetworkParams::from_tensors(std::vector<std::size_t> dims,
                                          std::vector<Tensor> weights,
                                          std::vector<Tensor> biases) {
  NetworkParams p;
  p.layer_dims = std::move(dims);
  p.weights = std::move(weights);
  p.biases = std::move(biases);
  p.validate();
  return p;
}

NetworkParams NetworkParams::detached() const {
  NetworkParams p;
  p.layer_dims = layer_dims;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto wv = weights[i].values();
    auto bv = biases[i].values();
    p.weights.push_back(Tensor::matrix(weights[i].shape().rows(), weights[i].shape().cols(),
                                       std::vector<double>(wv.begin(), wv.end()), false));
    p.biases.push_back(Tensor::vector(std::vector<double>(bv.begin(), bv.end()), false));
  }
  return p;
}

ForwardTrace forward(Tape& tape, const NetworkParams& params, const Tensor& x) {
  if (!(x.shape() == Shape(params.input_dim()))) {
    throw ShapeError("input shape " + x.shape().str() + " does not match d0 " +
                     Shape(params.input_dim()).str());
  }
  ForwardTrace trace;
  trace.input = x;
  Tensor cur = x;
  for (std::size_t i = 0; i < params.affine_layers(); ++i) {
    Tensor pre = tape.affine(params.weights[i], cur, params.biases[i]);
    trace.preacts.push_back(pre);
    if (i + 1 < params.affine_layers()) {
      cur = tape.relu(pre);
      trace.postacts.push_back(cur);
    }
  }
  return trace;
}

ForwardTrace forward(Tape& tape, const NetworkParams& params, std::span<const double> x) {
  return forward(tape, params, Tensor::vector(std::vector<double>(x.begin(), x.end())));
}

std::vector<double> forward_values(const NetworkParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim()) {
    throw ShapeError("input shape " + Shape(x.size()).str() + " does not match d0 " +
                     Shape(params.input_dim()).str());
  }
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t i = 0; i < params.affine_layers(); ++i) {
    std::size_t rows = params.layer_dims[i + 1];
    std::size_t cols = params.layer_dims[i];
    auto w = params.weights[i].values();
    auto b = params.biases[i].values();
    next.assign(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * cur[c];
      next[r] = acc + b[r];
    }
    if (i + 1 < params.affine_layers()) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    }
    cur.swap(next);
  }
  return cur;
}

std::vector<std::vector<double>> forward_batch(const NetworkParams& params,
                                               std::span<const std::vector<double>> xs) {
  std::size_t batch = xs.size();
  std::size_t d0 = params.input_dim();
  std::vector<double> cur(batch * d0);
  for (std::size_t s = 0; s < batch; ++s) {
    if (xs[s].size() != d0) {
      throw ShapeError("batch sample " + std::to_string(s) + " has shape " +
                       Shape(xs[s].size()).str() + ", expected " + Shape(d0).str());
    }
    std::copy(xs[s].begin(), xs[s].end(), cur.begin() + static_cast<std::ptrdiff_t>(s * d0));
  }
  std::size_t width = d0;
  std::vector<double> next;
  for (std::size_t i = 0; i < params.affine_layers(); ++i) {
    std::size_t rows = params.layer_dims[i + 1];
    auto w = params.weights[i].values();
    auto b = params.biases[i].values();
    next.assign(batch * rows, 0.0);
    for (std::size_t s = 0; s < batch; ++s) {
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < width; ++c) acc += w[r * width + c] * cur[s * width + c];
        next[s * rows + r] = acc + b[r];
      }
    }
    if (i + 1 < params.affine_layers()) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    }
    cur.swap(next);
    width = rows;
  }
  std::vector<std::vector<double>> out(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    out[s].assign(cur.begin() + static_cast<std::ptrdiff_t>(s * width),
                  cur.begin() + static_cast<std::ptrdiff_t>((s + 1) * width));
  }
  return out;
}

bool HammingPattern::operator<(const HammingPattern& other) const {
  if (layer_sizes != other.layer_sizes) return layer_sizes < other.layer_sizes;
  return bits < other.bits;
}

HammingPattern hamming_embedding(const ForwardTrace& trace) {
  HammingPattern p;
  for (std::size_t l = 0; l < trace.hidden_layers(); ++l) {
    auto z = trace.preacts[l].values();
    p.layer_sizes.push_back(z.size());
    for (double v : z) p.bits.push_back(v > 0.0 ? 1 : 0);
  }
  return p;
}

HammingPattern hamming_pattern(const NetworkParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim()) {
    throw ShapeError("input shape " + Shape(x.size()).str() + " does not match d0 " +
                     Shape(params.input_dim()).str());
  }
  HammingPattern p;
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t i = 0; i + 1 < params.affine_layers(); ++i) {
    std::size_t rows = params.layer_dims[i + 1];
    std::size_t cols = params.layer_dims[i];
    auto w = params.weights[i].values();
    auto b = params.biases[i].values();
    next.assign(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * cur[c];
      next[r] = acc + b[r];
    }
    p.layer_sizes.push_back(rows);
    for (double v : next) p.bits.push_back(v > 0.0 ? 1 : 0);
    for (double& v : next) v = v > 0.0 ? v : 0.0;
    cur.swap(next);
  }
  return p;
}

std::size_t hamming_distance(const HammingPattern& a, const HammingPattern& b) {
  if (a.layer_sizes != b.layer_sizes) {
    throw ShapeError("hamming_distance: patterns have different layer structure");
  }
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) d += a.bits[i] != b.bits[i] ? 1 : 0;
  return d;
}

std::size_t count_linear_regions_1d(const NetworkParams& params, std::span<const double> a,
                                    std::span<const double> b, std::size_t resolution) {
  if (resolution < 2) {
    throw ContractError("count_linear_regions_1d: resolution must be >= 2");
  }
  if (a.size() != b.size()) {
    throw ShapeError("segment endpoints have shapes " + Shape(a.size()).str() + " and " +
                     Shape(b.size()).str());
  }
  std::set<HammingPattern> seen;
  std::vector<double> x(a.size());
  for (std::size_t i = 0; i < resolution; ++i) {
    double t = static_cast<double>(i) / static_cast<double>(resolution - 1);
    for (std::size_t d = 0; d < x.size(); ++d) x[d] = (1.0 - t) * a[d] + t * b[d];
    seen.insert(hamming_pattern(params, x));
  }
  return seen.size();
}

void save_checkpoint(const NetworkParams& params, const std::string& path) {
  params.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out << "stablegrad-ckpt v1\n";
  for (std::size_t i = 0; i < params.layer_dims.size(); ++i) {
    out << (i ? " " : "") << params.layer_dims[i];
  }
  out << "\n";
  auto emit = [&out](const std::string& name, const Tensor& t) {
    out << name;
    if (t.shape().rank() == 2) {
      out << " " << t.shape().rows() << " " << t.shape().cols();
    } else {
      out << " " << t.shape().rows();
    }
    for (double v : t.values()) out << " " << format_double17(v);
    out << "\n";
  };
  for (std::size_t i = 0; i < params.affine_layers(); ++i) {
    emit("A" + std::to_string(i + 1), params.weights[i]);
    emit("b" + std::to_string(i + 1), params.biases[i]);
  }
  if (!out) throw DataError("write failure on checkpoint: " + path);
}

NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string header;
  std::getline(in, header);
  if (header != "stablegrad-ckpt v1") {
    throw DataError("bad checkpoint header in " + path + ": '" + header + "'");
  }
  std::string dims_line;
  std::getline(in, dims_line);
  std::istringstream dims_in(dims_line);
  std::vector<std::size_t> dims;
  std::size_t d;
  while (dims_in >> d) dims.push_back(d);
  if (dims.size() < 2) throw DataError("checkpoint layer-dims line is malformed: " + dims_line);

  NetworkParams p;
  p.layer_dims = dims;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    std::string line;
    // A_i line
    if (!std::getline(in, line)) throw DataError("checkpoint truncated before A" +
                                                 std::to_string(i + 1));
    {
      std::istringstream ls(line);
      std::string name;
      std::size_t r, c;
      ls >> name >> r >> c;
      if (name != "A" + std::to_string(i + 1) || r != dims[i + 1] || c != dims[i]) {
        throw DataError("unexpected checkpoint tensor line: " + line.substr(0, 40));
      }
      std::vector<double> v(r * c);
      for (double& x : v) {
        if (!(ls >> x)) throw DataError("short value list for " + name);
      }
      p.weights.push_back(Tensor::matrix(r, c, std::move(v), true));
    }
    // b_i line
    if (!std::getline(in, line)) throw DataError("checkpoint truncated before b" +
                                                 std::to_string(i + 1));
    {
      std::istringstream ls(line);
      std::string name;
      std::size_t n;
      ls >> name >> n;
      if (name != "b" + std::to_string(i + 1) || n != dims[i + 1]) {
        throw DataError("unexpected checkpoint tensor line: " + line.substr(0, 40));
      }
      std::vector<double> v(n);
      for (double& x : v) {
        if (!(ls >> x)) throw DataError("short value list for " + name);
      }
      p.biases.push_back(Tensor::vector(std::move(v), true));
    }
  }
  p.validate();
  return p;
}

}  // namespace stablegrad
