#include "stablegrad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "stablegrad/util.hpp"

namespace stablegrad {

DatasetKind dataset_kind_from_name(const std::string& name) {
  if (name == "two-moons") return DatasetKind::TwoMoons;
  if (name == "blobs") return DatasetKind::Blobs;
  if (name == "circle-manifold") return DatasetKind::CircleManifold;
  if (name == "csv-table") return DatasetKind::CsvTable;
  if (name == "raw-image-grid") return DatasetKind::RawImageGrid;
  throw ConfigError("unknown dataset kind '" + name +
                    "' (two-moons, blobs, circle-manifold, csv-table, raw-image-grid)");
}

std::string dataset_kind_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::TwoMoons: return "two-moons";
    case DatasetKind::Blobs: return "blobs";
    case DatasetKind::CircleManifold: return "circle-manifold";
    case DatasetKind::CsvTable: return "csv-table";
    case DatasetKind::RawImageGrid: return "raw-image-grid";
  }
  return "?";
}

namespace {

void generate_two_moons(const DatasetSpec& spec, Dataset& data, std::mt19937_64& rng) {
  data.input_dim = 2;
  data.classes = 2;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < spec.size; ++i) {
    double t = std::numbers::pi * unif(rng);
    std::vector<double> p(2);
    int label;
    if (i % 2 == 0) {
      p[0] = std::cos(t);
      p[1] = std::sin(t);
      label = 0;
    } else {
      p[0] = 1.0 - std::cos(t);
      p[1] = 0.5 - std::sin(t);
      label = 1;
    }
    p[0] += spec.noise * gauss(rng);
    p[1] += spec.noise * gauss(rng);
    data.inputs.push_back(std::move(p));
    data.labels.push_back(label);
  }
}

void generate_blobs(const DatasetSpec& spec, Dataset& data, std::mt19937_64& rng) {
  if (spec.classes < 1) throw ConfigError("blobs need at least one class");
  data.input_dim = spec.input_dim;
  data.classes = spec.classes;
  // class centers evenly spaced on the unit circle of the first two coords
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(spec.classes),
                                           std::vector<double>(spec.input_dim, 0.0));
  for (int c = 0; c < spec.classes; ++c) {
    double angle = 2.0 * std::numbers::pi * c / spec.classes;
    centers[static_cast<std::size_t>(c)][0] = std::cos(angle);
    if (spec.input_dim > 1) centers[static_cast<std::size_t>(c)][1] = std::sin(angle);
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < spec.size; ++i) {
    int label = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    std::vector<double> p = centers[static_cast<std::size_t>(label)];
    for (double& v : p) v += spec.noise * gauss(rng);
    data.inputs.push_back(std::move(p));
    data.labels.push_back(label);
  }
}

void generate_circle(const DatasetSpec& spec, Dataset& data, std::mt19937_64& rng) {
  data.input_dim = 2;
  data.classes = 2;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < spec.size; ++i) {
    double theta = 2.0 * std::numbers::pi * unif(rng);
    std::vector<double> p{std::cos(theta), std::sin(theta)};
    p[0] += spec.noise * gauss(rng);
    p[1] += spec.noise * gauss(rng);
    data.inputs.push_back(std::move(p));
    data.labels.push_back(theta < std::numbers::pi ? 0 : 1);
  }
}

void generate_image_grid(const DatasetSpec& spec, Dataset& data, std::mt19937_64& rng) {
  if (spec.classes < 1) throw ConfigError("raw-image-grid needs at least one class");
  std::size_t d = spec.grid_dim * spec.grid_dim;
  data.input_dim = d;
  data.classes = spec.classes;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> base(static_cast<std::size_t>(spec.classes),
                                        std::vector<double>(d));
  for (auto& b : base) {
    for (double& v : b) v = unif(rng);
  }
  for (std::size_t i = 0; i < spec.size; ++i) {
    int label = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    std::vector<double> p = base[static_cast<std::size_t>(label)];
    for (double& v : p) v += spec.noise * gauss(rng);
    data.inputs.push_back(std::move(p));
    data.labels.push_back(label);
  }
}

void load_csv_table(const DatasetSpec& spec, Dataset& data) {
  std::ifstream in(spec.csv_path);
  if (!in) throw DataError("cannot open dataset CSV: " + spec.csv_path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() < 2) {
      throw DataError("line " + std::to_string(line_no) +
                      ": need at least one coordinate and a label");
    }
    if (data.input_dim != 0 && fields.size() != data.input_dim + 1) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(data.input_dim + 1) + " fields, got " +
                      std::to_string(fields.size()));
    }
    std::vector<double> p(fields.size() - 1);
    try {
      for (std::size_t i = 0; i + 1 < fields.size(); ++i) p[i] = std::stod(fields[i]);
      data.labels.push_back(std::stoi(fields.back()));
    } catch (const std::exception&) {
      throw DataError("line " + std::to_string(line_no) + ": bad numeric field");
    }
    if (data.input_dim == 0) data.input_dim = p.size();
    data.inputs.push_back(std::move(p));
  }
  if (data.inputs.empty()) throw DataError("dataset CSV is empty: " + spec.csv_path);
  int max_label = *std::max_element(data.labels.begin(), data.labels.end());
  int min_label = *std::min_element(data.labels.begin(), data.labels.end());
  if (min_label < 0) throw DataError("negative label in " + spec.csv_path);
  data.classes = max_label + 1;
}

void minmax_normalize(Dataset& data) {
  double lo = data.inputs[0][0];
  double hi = lo;
  for (const auto& p : data.inputs) {
    for (double v : p) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  double span = hi - lo;
  for (auto& p : data.inputs) {
    for (double& v : p) v = span > 0.0 ? (v - lo) / span : 0.0;
  }
  data.image_like = true;
}

}  // namespace

Dataset load_or_generate(const DatasetSpec& spec) {
  Dataset data;
  std::mt19937_64 rng(spec.seed);
  switch (spec.kind) {
    case DatasetKind::TwoMoons: generate_two_moons(spec, data, rng); break;
    case DatasetKind::Blobs: generate_blobs(spec, data, rng); break;
    case DatasetKind::CircleManifold: generate_circle(spec, data, rng); break;
    case DatasetKind::CsvTable: load_csv_table(spec, data); break;
    case DatasetKind::RawImageGrid:
      generate_image_grid(spec, data, rng);
      minmax_normalize(data);
      break;
  }
  for (int label : data.labels) {
    if (label < 0 || label >= data.classes) {
      throw DataError("label " + std::to_string(label) + " outside [0, " +
                      std::to_string(data.classes) + ")");
    }
  }

  // 80/20 split by seeded shuffle
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(mix_seed(spec.seed, 0x5917));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t train_n = data.size() * 8 / 10;
  data.train_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_n));
  data.test_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(train_n), order.end());
  return data;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open dataset CSV for writing: " + path);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.inputs[i]) out << format_double17(v) << ",";
    out << data.labels[i] << "\n";
  }
}

}  // namespace stablegrad
