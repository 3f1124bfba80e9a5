#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stablegrad/adversary.hpp"
#include "stablegrad/dataset.hpp"
#include "stablegrad/laplacian.hpp"
#include "stablegrad/trainer.hpp"

namespace stablegrad {

// Flat `key = value` configuration with strict key checking: every key must
// be consumed by a typed getter, otherwise check_all_consumed names the
// first unknown key. `#` starts a comment; later merges overwrite.
class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_pairs(const std::vector<std::string>& pairs);  // "key=value"

  void merge(const ConfigMap& overrides);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  int get_int(const std::string& key, int fallback);
  bool get_bool(const std::string& key, bool fallback);
  // "8/255" fractions or plain decimals
  double get_ratio(const std::string& key, double fallback);
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback);
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         const std::vector<std::size_t>& fallback);
  // "0:0,40:0.1,80:0.005,100:0"
  Schedule get_schedule(const std::string& key, const Schedule& fallback);

  void check_all_consumed() const;

  // Sorted `key = value` lines of the fully resolved map.
  std::string canonical_text() const;
  std::string hash() const;  // 16 hex chars

 private:
  std::string raw(const std::string& key);
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> consumed_;
};

Schedule parse_schedule(const std::string& text);

DatasetSpec dataset_spec_from(ConfigMap& cfg);
TrainConfig train_config_from(ConfigMap& cfg);
AttackConfig attack_config_from(ConfigMap& cfg, bool image_like_default_clip);
ConvergenceConfig convergence_config_from(ConfigMap& cfg);

struct SparsifyAuditConfig {
  std::size_t nodes = 10;
  std::size_t dim = 2;
  std::size_t reps = 100000;
  std::vector<std::size_t> m_grid = {1, 4, 16};
  double s = 1.0;
  std::uint64_t seed = 0;
  std::string cloud_path;  // optional CSV cloud instead of a random one
};

SparsifyAuditConfig sparsify_audit_config_from(ConfigMap& cfg);

struct RegionsConfig {
  std::size_t segments = 50;
  std::size_t resolution = 201;
  std::uint64_t seed = 0;
  std::string checkpoint;
};

RegionsConfig regions_config_from(ConfigMap& cfg);

}  // namespace stablegrad
