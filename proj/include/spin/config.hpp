#pragma once

// Run configuration: sectioned key = value text.
//
//   # comment
//   [network]
//   base_width = 64
//
// Every key is optional on input; serialization writes all keys in a fixed
// order, so parse(serialize(c)) == c and serialize(parse(s)) == s for any
// serialized s. Unknown sections or keys are rejected.

#include <spin/losses.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace spin {

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct SynthConfig {
  int count = 64;
  int val_count = 16;
  int size = 64;
  bool occluders = true;
  bool operator==(const SynthConfig&) const = default;
};

struct TrainConfig {
  int batch_size = 4;
  bool augment = true;
  long max_iters = 0;  // 0: run the full schedule
  int log_every = 0;   // 0: one row per epoch
  OrientWeighting orient_weighting = OrientWeighting::kUniform;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double threshold = 0.5;
  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string train_split = "train";
  std::string val_split = "val";
  NetworkConfig network;
  Schedule schedule;
  TrainConfig train;
  SynthConfig synth;

  bool operator==(const RunConfig& o) const {
    const auto& a = network;
    const auto& b = o.network;
    return seed == o.seed && data_dir == o.data_dir && train_split == o.train_split && val_split == o.val_split &&
           a.base_width == b.base_width && a.hourglass_depth == b.hourglass_depth &&
           a.num_hourglasses == b.num_hourglasses && a.input_size == b.input_size &&
           a.transpose_kernel == b.transpose_kernel && a.n_orientation_classes == b.n_orientation_classes &&
           a.spin_variant == b.spin_variant && a.spin_m_div == b.spin_m_div && a.spin_n_div == b.spin_n_div &&
           a.spin_s_div == b.spin_s_div && a.pyramid_aggregation == b.pyramid_aggregation &&
           a.spin_zero_init == b.spin_zero_init && schedule.initial_lr == o.schedule.initial_lr &&
           schedule.steps == o.schedule.steps && schedule.factor == o.schedule.factor &&
           schedule.epochs == o.schedule.epochs && train == o.train && synth == o.synth;
  }

  void validate() const {
    network.validate();
    if (schedule.epochs < 1) throw ConfigError("schedule.epochs must be >= 1");
    if (!(schedule.initial_lr > 0)) throw ConfigError("schedule.initial_lr must be positive");
    if (!(schedule.factor > 0 && schedule.factor <= 1)) throw ConfigError("schedule.factor must be in (0, 1]");
    for (std::size_t i = 1; i < schedule.steps.size(); ++i)
      if (schedule.steps[i] <= schedule.steps[i - 1]) throw ConfigError("schedule.steps must be strictly increasing");
    if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (train.max_iters < 0) throw ConfigError("train.max_iters must be >= 0");
    if (synth.size % network.required_divisor() != 0)
      throw ConfigError("synth.size " + std::to_string(synth.size) + " must be divisible by " +
                        std::to_string(network.required_divisor()));
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename I>
I parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<I>(x);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || v[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct ConfigField {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<ConfigField>& config_fields() {
  using C = RunConfig;
  const auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  static const std::vector<ConfigField> fields = {
      {"run", "seed", [](const C& c) { return std::to_string(c.seed); },
       [](C& c, const std::string& v) { c.seed = parse_u64("run.seed", v); }},
      {"data", "dir", [](const C& c) { return c.data_dir; }, [](C& c, const std::string& v) { c.data_dir = v; }},
      {"data", "train_split", [](const C& c) { return c.train_split; },
       [](C& c, const std::string& v) { c.train_split = v; }},
      {"data", "val_split", [](const C& c) { return c.val_split; }, [](C& c, const std::string& v) { c.val_split = v; }},
      {"network", "base_width", [](const C& c) { return std::to_string(c.network.base_width); },
       [](C& c, const std::string& v) { c.network.base_width = parse_int<int>("network.base_width", v); }},
      {"network", "hourglass_depth", [](const C& c) { return std::to_string(c.network.hourglass_depth); },
       [](C& c, const std::string& v) { c.network.hourglass_depth = parse_int<int>("network.hourglass_depth", v); }},
      {"network", "num_hourglasses", [](const C& c) { return std::to_string(c.network.num_hourglasses); },
       [](C& c, const std::string& v) { c.network.num_hourglasses = parse_int<int>("network.num_hourglasses", v); }},
      {"network", "input_size", [](const C& c) { return std::to_string(c.network.input_size); },
       [](C& c, const std::string& v) { c.network.input_size = parse_int<int>("network.input_size", v); }},
      {"network", "transpose_kernel", [](const C& c) { return std::to_string(c.network.transpose_kernel); },
       [](C& c, const std::string& v) { c.network.transpose_kernel = parse_int<int>("network.transpose_kernel", v); }},
      {"network", "orientation_classes", [](const C& c) { return std::to_string(c.network.n_orientation_classes); },
       [](C& c, const std::string& v) {
         c.network.n_orientation_classes = parse_int<int>("network.orientation_classes", v);
       }},
      {"network", "spin_variant", [](const C& c) { return std::string(to_string(c.network.spin_variant)); },
       [](C& c, const std::string& v) {
         try {
           c.network.spin_variant = parse_spin_variant(v);
         } catch (const std::exception& e) {
           throw ConfigError(std::string("network.spin_variant: ") + e.what());
         }
       }},
      {"network", "spin_m_div", [](const C& c) { return std::to_string(c.network.spin_m_div); },
       [](C& c, const std::string& v) { c.network.spin_m_div = parse_int<int>("network.spin_m_div", v); }},
      {"network", "spin_n_div", [](const C& c) { return std::to_string(c.network.spin_n_div); },
       [](C& c, const std::string& v) { c.network.spin_n_div = parse_int<int>("network.spin_n_div", v); }},
      {"network", "spin_s_div", [](const C& c) { return std::to_string(c.network.spin_s_div); },
       [](C& c, const std::string& v) { c.network.spin_s_div = parse_int<int>("network.spin_s_div", v); }},
      {"network", "pyramid_aggregation",
       [](const C& c) { return std::string(c.network.pyramid_aggregation == PyramidAggregation::kSum ? "sum" : "mean"); },
       [](C& c, const std::string& v) {
         if (v == "mean") c.network.pyramid_aggregation = PyramidAggregation::kMean;
         else if (v == "sum") c.network.pyramid_aggregation = PyramidAggregation::kSum;
         else throw ConfigError("network.pyramid_aggregation: expected mean or sum, got '" + v + "'");
       }},
      {"network", "spin_zero_init", [b](const C& c) { return b(c.network.spin_zero_init); },
       [](C& c, const std::string& v) { c.network.spin_zero_init = parse_bool("network.spin_zero_init", v); }},
      {"schedule", "initial_lr", [](const C& c) { return format_double(c.schedule.initial_lr); },
       [](C& c, const std::string& v) { c.schedule.initial_lr = parse_double("schedule.initial_lr", v); }},
      {"schedule", "steps",
       [](const C& c) {
         std::string s;
         for (std::size_t i = 0; i < c.schedule.steps.size(); ++i) s += (i ? "," : "") + std::to_string(c.schedule.steps[i]);
         return s;
       },
       [](C& c, const std::string& v) {
         c.schedule.steps.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) c.schedule.steps.push_back(parse_int<int>("schedule.steps", trim(item)));
       }},
      {"schedule", "factor", [](const C& c) { return format_double(c.schedule.factor); },
       [](C& c, const std::string& v) { c.schedule.factor = parse_double("schedule.factor", v); }},
      {"schedule", "epochs", [](const C& c) { return std::to_string(c.schedule.epochs); },
       [](C& c, const std::string& v) { c.schedule.epochs = parse_int<int>("schedule.epochs", v); }},
      {"train", "batch_size", [](const C& c) { return std::to_string(c.train.batch_size); },
       [](C& c, const std::string& v) { c.train.batch_size = parse_int<int>("train.batch_size", v); }},
      {"train", "augment", [b](const C& c) { return b(c.train.augment); },
       [](C& c, const std::string& v) { c.train.augment = parse_bool("train.augment", v); }},
      {"train", "max_iters", [](const C& c) { return std::to_string(c.train.max_iters); },
       [](C& c, const std::string& v) { c.train.max_iters = parse_int<long>("train.max_iters", v); }},
      {"train", "log_every", [](const C& c) { return std::to_string(c.train.log_every); },
       [](C& c, const std::string& v) { c.train.log_every = parse_int<int>("train.log_every", v); }},
      {"train", "orient_weighting",
       [](const C& c) {
         return std::string(c.train.orient_weighting == OrientWeighting::kRoadOnly ? "road_only" : "uniform");
       },
       [](C& c, const std::string& v) {
         if (v == "uniform") c.train.orient_weighting = OrientWeighting::kUniform;
         else if (v == "road_only") c.train.orient_weighting = OrientWeighting::kRoadOnly;
         else throw ConfigError("train.orient_weighting: expected uniform or road_only, got '" + v + "'");
       }},
      {"train", "momentum", [](const C& c) { return format_double(c.train.momentum); },
       [](C& c, const std::string& v) { c.train.momentum = parse_double("train.momentum", v); }},
      {"train", "weight_decay", [](const C& c) { return format_double(c.train.weight_decay); },
       [](C& c, const std::string& v) { c.train.weight_decay = parse_double("train.weight_decay", v); }},
      {"train", "threshold", [](const C& c) { return format_double(c.train.threshold); },
       [](C& c, const std::string& v) { c.train.threshold = parse_double("train.threshold", v); }},
      {"synth", "count", [](const C& c) { return std::to_string(c.synth.count); },
       [](C& c, const std::string& v) { c.synth.count = parse_int<int>("synth.count", v); }},
      {"synth", "val_count", [](const C& c) { return std::to_string(c.synth.val_count); },
       [](C& c, const std::string& v) { c.synth.val_count = parse_int<int>("synth.val_count", v); }},
      {"synth", "size", [](const C& c) { return std::to_string(c.synth.size); },
       [](C& c, const std::string& v) { c.synth.size = parse_int<int>("synth.size", v); }},
      {"synth", "occluders", [b](const C& c) { return b(c.synth.occluders); },
       [](C& c, const std::string& v) { c.synth.occluders = parse_bool("synth.occluders", v); }},
  };
  return fields;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
  const auto& fields = detail::config_fields();
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + "malformed section header '" + t + "'");
      section = detail::trim(t.substr(1, t.size() - 2));
      bool known = false;
      for (const auto& f : fields) known = known || section == f.section;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value, got '" + t + "'");
    if (section.empty()) throw ConfigError(where + "key outside any section");
    const std::string key = detail::trim(t.substr(0, eq)), value = detail::trim(t.substr(eq + 1));
    const detail::ConfigField* field = nullptr;
    for (const auto& f : fields)
      if (section == f.section && key == f.key) field = &f;
    if (!field) throw ConfigError(where + "unknown key '" + key + "' in section [" + section + "]");
    try {
      field->set(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

inline std::string serialize_config(const RunConfig& c) {
  std::string out, section;
  for (const auto& f : detail::config_fields()) {
    if (section != f.section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(c) + "\n";
  }
  return out;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace spin
