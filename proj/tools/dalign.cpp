// Command-line front end.
//
// Exit codes:
//   0  success
//   1  runtime failure (bad data, numerical error, ...)
//   2  usage or configuration error
//   3  I/O error (missing or unwritable file)
//   4  selftest failure

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dalign/config.hpp"
#include "dalign/error.hpp"
#include "dalign/harness.hpp"
#include "dalign/selftest.hpp"
#include "dalign/textio.hpp"

namespace {

using namespace dalign;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitSelftest = 4;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

// Configuration problems are reported with exit code 2 wherever they surface.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

ExperimentConfig build_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  try {
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    for (const std::string& o : args.overrides) apply_override(cfg, o);
  } catch (const ParseError& e) {
    throw UsageError(args.config_path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (args.seed) cfg.seed = *args.seed;
  if (!args.out.empty()) cfg.out_dir = args.out;

  const std::string effective = dump_config(cfg);
  std::cout << "# effective configuration\n" << effective << '\n';
  write_file(out_path(cfg, "config.txt"), effective);
  return cfg;
}

std::string timing_csv(const std::vector<MetricsRecord>& records) {
  std::ostringstream out;
  out << "phase,epoch,steps,wall_time_s\n";
  for (const MetricsRecord& r : records) {
    out << r.phase << ',' << r.epoch << ',' << r.steps << ',' << format_double(r.wall_time) << '\n';
  }
  return out.str();
}

void write_run_outputs(const ExperimentConfig& cfg, const std::vector<MetricsRecord>& records) {
  write_file(out_path(cfg, "metrics.jsonl"), metrics_stream(records));
  write_file(out_path(cfg, "summary.csv"), summary_table(records));
  write_file(out_path(cfg, "timing.csv"), timing_csv(records));
}

Model require_checkpoint(const ExperimentConfig& cfg) {
  if (cfg.checkpoint_path.empty()) throw UsageError("this command needs checkpoint_path=<file>");
  return load_checkpoint(cfg.checkpoint_path);
}

// Loads checkpoint_path when set; otherwise pretrains and saves pretrain.ckpt.
Model pretrained_model(const ExperimentConfig& cfg, const Dataset& data,
                       std::vector<MetricsRecord>& records) {
  if (!cfg.checkpoint_path.empty()) return load_checkpoint(cfg.checkpoint_path);
  TrainResult pre = pretrain(cfg, data);
  save_checkpoint(pre.model, out_path(cfg, "pretrain.ckpt"));
  records.insert(records.end(), pre.metrics.begin(), pre.metrics.end());
  std::cout << "pretrained; checkpoint " << out_path(cfg, "pretrain.ckpt") << '\n';
  return std::move(pre.model);
}

void print_final(const MetricsRecord& r) {
  std::cout << r.phase << " epoch " << r.epoch << ": source acc " << r.acc_source << " auc "
            << r.auc_source << ", target acc " << r.acc_target << " auc " << r.auc_target
            << ", d_inter " << r.d_inter << '\n';
}

int cmd_gen_data(const CommonArgs& args) {
  const ExperimentConfig cfg = build_config(args);
  const Dataset data = generate_benchmark(cfg.benchmark);
  const std::string path = out_path(cfg, "benchmark.csv");
  write_dataset(data, path);
  write_file(path + ".spec", describe_spec(cfg.benchmark));
  std::cout << "wrote " << data.count(Domain::Source) << " source and "
            << data.count(Domain::Target) << " target samples to " << path << '\n';
  return kExitOk;
}

int cmd_pretrain(const CommonArgs& args) {
  const ExperimentConfig cfg = build_config(args);
  const Dataset data = load_or_generate(cfg);
  const TrainResult res = pretrain(cfg, data);
  save_checkpoint(res.model, out_path(cfg, "pretrain.ckpt"));
  write_run_outputs(cfg, res.metrics);
  if (!res.metrics.empty()) print_final(res.metrics.back());
  return kExitOk;
}

int cmd_adapt(const CommonArgs& args) {
  const ExperimentConfig cfg = build_config(args);
  const Dataset data = load_or_generate(cfg);
  std::vector<MetricsRecord> records;
  const Model start = pretrained_model(cfg, data, records);
  const TrainResult res = adapt(cfg, start, data);
  save_checkpoint(res.model, out_path(cfg, "adapt.ckpt"));
  records.insert(records.end(), res.metrics.begin(), res.metrics.end());
  write_run_outputs(cfg, records);
  if (!res.metrics.empty()) print_final(res.metrics.back());
  return kExitOk;
}

int cmd_eval(const CommonArgs& args) {
  const ExperimentConfig cfg = build_config(args);
  const Model model = require_checkpoint(cfg);
  const Dataset data = load_or_generate(cfg);
  std::ostringstream csv;
  csv << "domain,acc,auc,samples\n";
  for (Domain d : {Domain::Source, Domain::Target}) {
    const EvalResult r = evaluate(model, data, d);
    csv << to_string(d) << ',' << format_double(r.acc) << ',' << format_double(r.auc) << ','
        << r.samples << '\n';
  }
  write_file(out_path(cfg, "eval.csv"), csv.str());
  std::cout << csv.str();
  return kExitOk;
}

int cmd_ablate(const CommonArgs& args) {
  const ExperimentConfig cfg = build_config(args);
  const Dataset data = load_or_generate(cfg);
  std::vector<MetricsRecord> records;
  const Model start = pretrained_model(cfg, data, records);
  const std::string table = ablation_table(run_ablation(cfg, start, data));
  write_file(out_path(cfg, "ablation.csv"), table);
  std::cout << table;
  return kExitOk;
}

int cmd_sweep(const CommonArgs& args) {
  const ExperimentConfig cfg = build_config(args);
  const Dataset data = load_or_generate(cfg);
  std::vector<MetricsRecord> records;
  const Model start = pretrained_model(cfg, data, records);
  const std::string table = sweep_table(data_efficiency_sweep(cfg, start, data, cfg.sweep_fractions));
  write_file(out_path(cfg, "sweep.csv"), table);
  std::cout << table;
  return kExitOk;
}

int cmd_dump_embeddings(const CommonArgs& args) {
  const ExperimentConfig cfg = build_config(args);
  const Model model = require_checkpoint(cfg);
  const Dataset data = load_or_generate(cfg);
  dump_embeddings(model, data, out_path(cfg, "embeddings.csv"));
  std::cout << "wrote " << data.records.size() << " rows to " << out_path(cfg, "embeddings.csv") << '\n';
  return kExitOk;
}

int cmd_selftest() {
  const std::vector<SelftestRow> rows = run_selftest();
  std::cout << selftest_table(rows);
  for (const SelftestRow& r : rows) {
    if (!r.passed) return kExitSelftest;
  }
  return kExitOk;
}

std::string key_help() {
  std::ostringstream out;
  out << "Config keys (file lines `key = value`, or key=value on the command line):\n";
  for (const ConfigKey& k : config_keys()) out << "  " << k.name << "  " << k.description << '\n';
  out << "\nExit codes: 0 ok, 1 runtime error, 2 usage/config error, 3 I/O error, 4 selftest failure\n";
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-aligned fake detection: data generation, training, evaluation"};
  app.footer(key_help());
  app.require_subcommand(1);

  CommonArgs args;
  int (*handler)(const CommonArgs&) = nullptr;
  bool selftest = false;

  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const CommonArgs&);
  };
  const Entry entries[] = {
      {"gen-data", "write the configured synthetic benchmark and its spec sidecar", cmd_gen_data},
      {"pretrain", "train encoder and head on the labeled source domain", cmd_pretrain},
      {"adapt", "joint adaptation from checkpoint_path (or a fresh pretrain)", cmd_adapt},
      {"eval", "accuracy and AUC of checkpoint_path on both domains", cmd_eval},
      {"ablate", "full model against single-module-removed variants", cmd_ablate},
      {"sweep", "adaptation with growing fractions of the target domain", cmd_sweep},
      {"dump-embeddings", "encoder features of every sample as CSV", cmd_dump_embeddings},
  };
  for (const Entry& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", args.config_path, "config file");
    sub->add_option("--seed", args.seed, "run seed, overrides the config");
    sub->add_option("--out", args.out, "output directory, overrides the config");
    sub->add_option("overrides", args.overrides, "key=value config overrides");
    sub->callback([&handler, run = e.run] { handler = run; });
  }
  app.add_subcommand("selftest", "gradient checks and closed-form oracles")->callback([&] {
    selftest = true;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return selftest ? cmd_selftest() : handler(args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
