#include "stablegrad/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "stablegrad/util.hpp"

namespace stablegrad {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) parts.push_back(trim(part));
  return parts;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse '" + value + "' as a number");
  }
}

}  // namespace

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ConfigMap cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    std::size_t eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    }
    if (cfg.values_.count(key)) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = value;
    cfg.consumed_[key] = false;
  }
  return cfg;
}

ConfigMap ConfigMap::parse_pairs(const std::vector<std::string>& pairs) {
  ConfigMap cfg;
  for (const std::string& p : pairs) {
    std::size_t eq = p.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + p + "' is not of the form key=value");
    }
    cfg.set(trim(p.substr(0, eq)), trim(p.substr(eq + 1)));
  }
  return cfg;
}

void ConfigMap::merge(const ConfigMap& overrides) {
  for (const auto& [k, v] : overrides.values_) set(k, v);
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  consumed_[key] = false;
}

bool ConfigMap::has(const std::string& key) const { return values_.count(key) > 0; }

std::string ConfigMap::raw(const std::string& key) {
  consumed_[key] = true;
  return values_.at(key);
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) {
  return has(key) ? raw(key) : fallback;
}

double ConfigMap::get_double(const std::string& key, double fallback) {
  if (!has(key)) return fallback;
  return parse_double(key, raw(key));
}

std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) {
  if (!has(key)) return fallback;
  std::string v = raw(key);
  try {
    std::size_t used = 0;
    std::uint64_t r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as an unsigned integer");
  }
}

int ConfigMap::get_int(const std::string& key, int fallback) {
  if (!has(key)) return fallback;
  std::string v = raw(key);
  try {
    std::size_t used = 0;
    int r = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as an integer");
  }
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  std::string v = raw(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a boolean");
}

double ConfigMap::get_ratio(const std::string& key, double fallback) {
  if (!has(key)) return fallback;
  std::string v = raw(key);
  std::size_t slash = v.find('/');
  if (slash == std::string::npos) return parse_double(key, v);
  double num = parse_double(key, trim(v.substr(0, slash)));
  double den = parse_double(key, trim(v.substr(slash + 1)));
  if (den == 0.0) throw ConfigError("key '" + key + "': division by zero in '" + v + "'");
  return num / den;
}

std::vector<double> ConfigMap::get_double_list(const std::string& key,
                                               const std::vector<double>& fallback) {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const std::string& part : split(raw(key), ',')) out.push_back(parse_double(key, part));
  return out;
}

std::vector<std::size_t> ConfigMap::get_size_list(const std::string& key,
                                                  const std::vector<std::size_t>& fallback) {
  if (!has(key)) return fallback;
  std::vector<std::size_t> out;
  std::string value = raw(key);
  for (const std::string& part : split(value, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': cannot parse '" + part + "' as an integer");
    }
  }
  return out;
}

Schedule parse_schedule(const std::string& text) {
  Schedule s;
  for (const std::string& part : split(text, ',')) {
    std::size_t colon = part.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("schedule entry '" + part + "' is not of the form epoch:value");
    }
    s.points.push_back({parse_double("schedule", trim(part.substr(0, colon))),
                        parse_double("schedule", trim(part.substr(colon + 1)))});
  }
  s.validate();
  return s;
}

Schedule ConfigMap::get_schedule(const std::string& key, const Schedule& fallback) {
  if (!has(key)) return fallback;
  try {
    return parse_schedule(raw(key));
  } catch (const std::domain_error& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

void ConfigMap::check_all_consumed() const {
  for (const auto& [k, used] : consumed_) {
    if (!used) throw ConfigError("unknown config key: " + k);
  }
}

std::string ConfigMap::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

std::string ConfigMap::hash() const { return hex16(fnv1a64(canonical_text())); }

DatasetSpec dataset_spec_from(ConfigMap& cfg) {
  DatasetSpec spec;
  spec.kind = dataset_kind_from_name(cfg.get_string("dataset.kind", "two-moons"));
  spec.size = static_cast<std::size_t>(cfg.get_u64("dataset.size", 1000));
  spec.noise = cfg.get_double("dataset.noise", 0.0);
  spec.input_dim = static_cast<std::size_t>(cfg.get_u64("dataset.input_dim", 2));
  spec.classes = cfg.get_int("dataset.classes", 2);
  spec.seed = cfg.get_u64("dataset.seed", 0);
  spec.csv_path = cfg.get_string("dataset.path", "");
  spec.grid_dim = static_cast<std::size_t>(cfg.get_u64("dataset.grid_dim", 4));
  if (spec.kind == DatasetKind::CsvTable && spec.csv_path.empty()) {
    throw ConfigError("dataset.kind = csv-table requires dataset.path");
  }
  return spec;
}

TrainConfig train_config_from(ConfigMap& cfg) {
  TrainConfig tc;
  tc.epochs = static_cast<std::size_t>(cfg.get_u64("epochs", 100));
  tc.batch_size = static_cast<std::size_t>(cfg.get_u64("batch_size", 64));
  tc.hidden_dims = cfg.get_size_list("model.hidden", {64, 64});
  tc.gamma_k = cfg.get_double("gamma_k", 0.0);
  tc.alpha = cfg.get_double("alpha", 8.0);
  tc.momentum = cfg.get_double("momentum", 0.0);
  tc.seed = cfg.get_u64("seed", 0);
  tc.checkpoint_every = static_cast<std::size_t>(cfg.get_u64("checkpoint_every", 0));
  tc.out_dir = cfg.get_string("out.dir", "");

  tc.lr = cfg.get_schedule("schedule.lr",
                           Schedule{{{0, 0.0}, {40, 0.1}, {80, 0.005}, {100, 0.0}}});

  // epsilon: explicit schedule, or a peak value ramped over epochs 10..35
  bool has_eps_sched = cfg.has("schedule.eps");
  double eps_max = cfg.get_ratio("eps.max", -1.0);
  if (cfg.has("eps.max_255")) {
    if (eps_max >= 0.0) throw ConfigError("give only one of eps.max and eps.max_255");
    eps_max = cfg.get_double("eps.max_255", 0.0) / 255.0;
  }
  if (has_eps_sched && eps_max >= 0.0) {
    throw ConfigError("give only one of schedule.eps and eps.max/eps.max_255");
  }
  if (has_eps_sched) {
    tc.eps = cfg.get_schedule("schedule.eps", tc.eps);
  } else if (eps_max >= 0.0) {
    tc.eps = Schedule{{{10, eps_max / 4.0}, {35, eps_max}}};
  } else {
    tc.eps = Schedule::constant(0.0);
  }

  // gamma ramps: explicit schedule, or start value times ramp over 20..80
  auto gamma_schedule = [&cfg](const std::string& name) {
    std::string sched_key = "schedule." + name;
    std::string start_key = name + ".start";
    std::string ramp_key = name + ".ramp";
    bool has_sched = cfg.has(sched_key);
    bool has_start = cfg.has(start_key);
    if (has_sched && has_start) {
      throw ConfigError("give only one of " + sched_key + " and " + start_key);
    }
    if (has_sched) return cfg.get_schedule(sched_key, Schedule::constant(0.0));
    if (has_start) {
      double start = cfg.get_double(start_key, 0.0);
      double ramp = cfg.get_double(ramp_key, 10.0);
      return Schedule{{{20, start}, {80, start * ramp}}};
    }
    return Schedule::constant(0.0);
  };
  tc.gamma_i = gamma_schedule("gamma_i");
  tc.gamma_h = gamma_schedule("gamma_h");

  try {
    tc.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
  return tc;
}

AttackConfig attack_config_from(ConfigMap& cfg, bool image_like_default_clip) {
  AttackConfig ac;
  ac.eps = cfg.get_ratio("eval.eps", 8.0 / 255.0);
  ac.steps = cfg.get_int("eval.steps", 20);
  ac.restarts = cfg.get_int("eval.restarts", 10);
  ac.step_size = cfg.get_ratio("eval.step_size", 2.0 / 255.0);
  ac.seed = cfg.get_u64("seed", 0);
  std::string clip = cfg.get_string("eval.clip", image_like_default_clip ? "0,1" : "none");
  if (clip != "none") {
    auto parts = split(clip, ',');
    if (parts.size() != 2) {
      throw ConfigError("eval.clip must be 'lo,hi' or 'none', got '" + clip + "'");
    }
    ac.clip = {parse_double("eval.clip", parts[0]), parse_double("eval.clip", parts[1])};
  }
  try {
    ac.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("invalid attack config: ") + e.what());
  }
  return ac;
}

ConvergenceConfig convergence_config_from(ConfigMap& cfg) {
  ConvergenceConfig cc;
  cc.manifold = manifold_from_name(cfg.get_string("lap.manifold", "circle"));
  cc.n_grid = cfg.get_size_list("lap.n_grid", {100, 200, 500});
  cc.eps_grid = cfg.get_double_list("lap.eps_grid", {0.05, 0.1, 0.2});
  cc.c = static_cast<std::size_t>(cfg.get_u64("lap.c", 2));
  cc.s = cfg.get_double("lap.s", 0.5);
  cc.probes = static_cast<std::size_t>(cfg.get_u64("lap.probes", 20));
  cc.ambient_dim = static_cast<std::size_t>(cfg.get_u64("lap.ambient_dim", 0));
  cc.seed = cfg.get_u64("seed", 0);
  return cc;
}

SparsifyAuditConfig sparsify_audit_config_from(ConfigMap& cfg) {
  SparsifyAuditConfig sc;
  sc.nodes = static_cast<std::size_t>(cfg.get_u64("sp.nodes", 10));
  sc.dim = static_cast<std::size_t>(cfg.get_u64("sp.dim", 2));
  sc.reps = static_cast<std::size_t>(cfg.get_u64("sp.reps", 100000));
  sc.m_grid = cfg.get_size_list("sp.m_grid", {1, 4, 16});
  sc.s = cfg.get_double("sp.s", 1.0);
  sc.seed = cfg.get_u64("seed", 0);
  sc.cloud_path = cfg.get_string("cloud.path", "");
  return sc;
}

RegionsConfig regions_config_from(ConfigMap& cfg) {
  RegionsConfig rc;
  rc.segments = static_cast<std::size_t>(cfg.get_u64("regions.segments", 50));
  rc.resolution = static_cast<std::size_t>(cfg.get_u64("regions.resolution", 201));
  rc.seed = cfg.get_u64("seed", 0);
  rc.checkpoint = cfg.get_string("checkpoint", "");
  return rc;
}

}  // namespace stablegrad
