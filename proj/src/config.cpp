#include "dalign/config.hpp"

#include <functional>
#include <sstream>

#include "dalign/error.hpp"
#include "dalign/textio.hpp"

namespace dalign {
namespace {

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct KeyHandler {
  ConfigKey key;
  Setter set;
  Getter get;
};

std::size_t to_size(std::string_view v) {
  const long long n = parse_int(v);
  if (n < 0) throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  return static_cast<std::size_t>(n);
}

std::vector<std::size_t> to_sizes(std::string_view v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  for (std::string_view part : split(v, ',')) out.push_back(to_size(trim(part)));
  return out;
}

std::vector<double> to_doubles(std::string_view v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (std::string_view part : split(v, ',')) out.push_back(parse_double(trim(part)));
  return out;
}

std::vector<std::string> to_strings(std::string_view v) {
  std::vector<std::string> out;
  for (std::string_view part : split(v, ',')) out.emplace_back(trim(part));
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

template <typename T>
std::string join_values(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>) {
      out += format_double(items[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += items[i];
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

KeyHandler size_key(std::string name, std::string doc, std::size_t ExperimentConfig::*field) {
  return {{std::move(name), std::move(doc)},
          [field](ExperimentConfig& c, std::string_view v) { c.*field = to_size(v); },
          [field](const ExperimentConfig& c) { return std::to_string(c.*field); }};
}

KeyHandler double_key(std::string name, std::string doc,
                      std::function<double&(ExperimentConfig&)> field) {
  return {{std::move(name), std::move(doc)},
          [field](ExperimentConfig& c, std::string_view v) { field(c) = parse_double(v); },
          [field](const ExperimentConfig& c) {
            ExperimentConfig copy = c;
            return format_double(field(copy));
          }};
}

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = [] {
    std::vector<KeyHandler> t;
    t.push_back({{"seed", "run seed for initialization, batch order and pair sampling"},
                 [](ExperimentConfig& c, std::string_view v) {
                   c.seed = static_cast<std::uint64_t>(parse_int(v));
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    t.push_back({{"out_dir", "directory receiving every output file"},
                 [](ExperimentConfig& c, std::string_view v) { c.out_dir = std::string(v); },
                 [](const ExperimentConfig& c) { return c.out_dir; }});
    t.push_back({{"data_path", "benchmark CSV to load; empty generates the bench_* benchmark"},
                 [](ExperimentConfig& c, std::string_view v) { c.data_path = std::string(v); },
                 [](const ExperimentConfig& c) { return c.data_path; }});
    t.push_back({{"checkpoint_path", "pretrained checkpoint for adapt/eval/ablate/sweep; empty pretrains first"},
                 [](ExperimentConfig& c, std::string_view v) { c.checkpoint_path = std::string(v); },
                 [](const ExperimentConfig& c) { return c.checkpoint_path; }});
    t.push_back(size_key("pretrain_epochs", "epochs of source-only training",
                         &ExperimentConfig::pretrain_epochs));
    t.push_back(size_key("adapt_epochs", "epochs of joint adaptation",
                         &ExperimentConfig::adapt_epochs));
    t.push_back(size_key("pretrain_batch", "source batch size during pretraining",
                         &ExperimentConfig::pretrain_batch));
    t.push_back(size_key("total_batch", "joint batch size, split between domains by dataset size",
                         &ExperimentConfig::total_batch));
    t.push_back(double_key("eta1", "weight of the domain alignment loss",
                           [](ExperimentConfig& c) -> double& { return c.etas.eta1; }));
    t.push_back(double_key("eta2", "weight of the class boundary separation loss",
                           [](ExperimentConfig& c) -> double& { return c.etas.eta2; }));
    t.push_back(double_key("eta3", "weight of the adversarial domain loss",
                           [](ExperimentConfig& c) -> double& { return c.etas.eta3; }));
    t.push_back(double_key("eta4", "weight of the prediction diversity regularizer",
                           [](ExperimentConfig& c) -> double& { return c.etas.eta4; }));
    t.push_back(double_key("mu", "centroid momentum in [0, 1)",
                           [](ExperimentConfig& c) -> double& { return c.mu; }));
    t.push_back({{"lambda_schedule", "gradient reversal schedule: constant or progressive"},
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v == "constant") {
                     c.lambda_schedule = LambdaSchedule::Constant;
                   } else if (v == "progressive") {
                     c.lambda_schedule = LambdaSchedule::Progressive;
                   } else {
                     throw ConfigError("expected constant or progressive, got '" + std::string(v) + "'");
                   }
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.lambda_schedule == LambdaSchedule::Constant ? "constant"
                                                                                   : "progressive");
                 }});
    t.push_back(double_key("lambda", "gradient reversal strength (the schedule's ceiling)",
                           [](ExperimentConfig& c) -> double& { return c.lambda; }));
    t.push_back(double_key("learning_rate", "SGD learning rate",
                           [](ExperimentConfig& c) -> double& { return c.optimizer.learning_rate; }));
    t.push_back(double_key("momentum", "SGD momentum",
                           [](ExperimentConfig& c) -> double& { return c.optimizer.momentum; }));
    t.push_back(double_key("weight_decay", "SGD weight decay, added to the gradient",
                           [](ExperimentConfig& c) -> double& { return c.optimizer.weight_decay; }));
    t.push_back({{"prior", "class prior real,fake for the diversity regularizer"},
                 [](ExperimentConfig& c, std::string_view v) {
                   const std::vector<double> p = to_doubles(v);
                   if (p.size() != 2) throw ConfigError("prior needs two values real,fake");
                   c.prior = PriorDistribution(p[0], p[1]);
                 },
                 [](const ExperimentConfig& c) {
                   return format_double(c.prior[0]) + "," + format_double(c.prior[1]);
                 }});
    t.push_back({{"pseudo_skip_nearest", "pair each target sample with its second-nearest neighbour"},
                 [](ExperimentConfig& c, std::string_view v) { c.pseudo_skip_nearest = to_bool(v); },
                 [](const ExperimentConfig& c) {
                   return std::string(c.pseudo_skip_nearest ? "true" : "false");
                 }});
    t.push_back({{"encoder_hidden", "comma-separated hidden widths of the encoder"},
                 [](ExperimentConfig& c, std::string_view v) { c.model.encoder.hidden_dims = to_sizes(v); },
                 [](const ExperimentConfig& c) { return join_values(c.model.encoder.hidden_dims); }});
    t.push_back({{"feature_dim", "width of the shared feature space"},
                 [](ExperimentConfig& c, std::string_view v) {
                   c.model.encoder.feature_dim = to_size(v);
                   c.model.domain_classifier.feature_dim = c.model.encoder.feature_dim;
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.model.encoder.feature_dim); }});
    t.push_back({{"adc_hidden", "comma-separated hidden widths of the domain classifier"},
                 [](ExperimentConfig& c, std::string_view v) {
                   c.model.domain_classifier.hidden_dims = to_sizes(v);
                 },
                 [](const ExperimentConfig& c) {
                   return join_values(c.model.domain_classifier.hidden_dims);
                 }});
    t.push_back({{"bench_feature_dim", "generated benchmark: input dimension"},
                 [](ExperimentConfig& c, std::string_view v) { c.benchmark.feature_dim = to_size(v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.benchmark.feature_dim); }});
    t.push_back({{"bench_n_source", "generated benchmark: labeled source samples"},
                 [](ExperimentConfig& c, std::string_view v) { c.benchmark.n_source = to_size(v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.benchmark.n_source); }});
    t.push_back({{"bench_n_target", "generated benchmark: unlabeled target samples"},
                 [](ExperimentConfig& c, std::string_view v) { c.benchmark.n_target = to_size(v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.benchmark.n_target); }});
    t.push_back({{"bench_source_methods", "generated benchmark: comma-separated source forgery methods"},
                 [](ExperimentConfig& c, std::string_view v) { c.benchmark.source_methods = to_strings(v); },
                 [](const ExperimentConfig& c) { return join_values(c.benchmark.source_methods); }});
    t.push_back({{"bench_target_methods", "generated benchmark: comma-separated target forgery methods"},
                 [](ExperimentConfig& c, std::string_view v) { c.benchmark.target_methods = to_strings(v); },
                 [](const ExperimentConfig& c) { return join_values(c.benchmark.target_methods); }});
    t.push_back({{"bench_shift", "generated benchmark: comma-separated target shift; empty for the default"},
                 [](ExperimentConfig& c, std::string_view v) { c.benchmark.shift_vector = to_doubles(v); },
                 [](const ExperimentConfig& c) { return join_values(c.benchmark.shift_vector); }});
    t.push_back(double_key("bench_noise_scale", "generated benchmark: per-coordinate noise",
                           [](ExperimentConfig& c) -> double& { return c.benchmark.noise_scale; }));
    t.push_back(double_key("bench_fake_fraction", "generated benchmark: probability a sample is fake",
                           [](ExperimentConfig& c) -> double& { return c.benchmark.fake_fraction; }));
    t.push_back(double_key("bench_artifact_strength", "generated benchmark: length of the shared forgery offset",
                           [](ExperimentConfig& c) -> double& { return c.benchmark.artifact_strength; }));
    t.push_back(double_key("bench_rotation_shift_cosine",
                           "generated benchmark: lean of the forgery rotation plane toward the shift",
                           [](ExperimentConfig& c) -> double& {
                             return c.benchmark.rotation_shift_cosine;
                           }));
    t.push_back({{"bench_seed", "generated benchmark: generator seed"},
                 [](ExperimentConfig& c, std::string_view v) {
                   c.benchmark.seed = static_cast<std::uint64_t>(parse_int(v));
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.benchmark.seed); }});
    t.push_back({{"sweep_fractions", "comma-separated target fractions for the sweep"},
                 [](ExperimentConfig& c, std::string_view v) { c.sweep_fractions = to_doubles(v); },
                 [](const ExperimentConfig& c) { return join_values(c.sweep_fractions); }});
    return t;
  }();
  return table;
}

std::string valid_key_list() {
  std::string out;
  for (const KeyHandler& h : handlers()) {
    if (!out.empty()) out += ", ";
    out += h.key.name;
  }
  return out;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const KeyHandler& h : handlers()) k.push_back(h.key);
    return k;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value) {
  for (const KeyHandler& h : handlers()) {
    if (h.key.name != key) continue;
    try {
      h.set(config, trim(value));
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + std::string(key) + "': " + e.what());
    } catch (const Error& e) {
      throw ConfigError("config key '" + std::string(key) + "': " + e.what());
    }
    return;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'; valid keys: " + valid_key_list());
}

void apply_override(ExperimentConfig& config, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  apply_setting(config, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "missing key");
    try {
      apply_setting(base, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  return parse_config(read_file(path), std::move(base));
}

std::string dump_config(const ExperimentConfig& config) {
  std::ostringstream out;
  for (const KeyHandler& h : handlers()) out << h.key.name << " = " << h.get(config) << '\n';
  return out.str();
}

}  // namespace dalign
