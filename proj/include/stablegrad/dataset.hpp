#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stablegrad/errors.hpp"

namespace stablegrad {

enum class DatasetKind { TwoMoons, Blobs, CircleManifold, CsvTable, RawImageGrid };

DatasetKind dataset_kind_from_name(const std::string& name);
std::string dataset_kind_name(DatasetKind kind);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::TwoMoons;
  std::size_t size = 1000;
  double noise = 0.0;
  std::size_t input_dim = 2;  // used by blobs and raw-image-grid
  int classes = 2;
  std::uint64_t seed = 0;
  std::string csv_path;       // csv-table only
  std::size_t grid_dim = 4;   // raw-image-grid side length
};

struct Dataset {
  std::size_t input_dim = 0;
  int classes = 0;
  bool image_like = false;  // true when inputs were min-max scaled to [0, 1]
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;

  std::size_t size() const { return inputs.size(); }
};

// Deterministic generation (or CSV ingestion) plus an 80/20 split by
// seeded shuffle.
Dataset load_or_generate(const DatasetSpec& spec);

// One sample per row: coordinates then the integer label, 17 significant
// digits so a write/load cycle reproduces values exactly.
void write_dataset_csv(const Dataset& data, const std::string& path);

}  // namespace stablegrad
