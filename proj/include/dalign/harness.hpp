#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dalign/data.hpp"
#include "dalign/ddo.hpp"
#include "dalign/losses.hpp"
#include "dalign/model.hpp"

namespace dalign {

// Batch order, labeled-pair draws and target subsampling each use their own
// generator, seeded from the run seed.
enum class SeedStream { Sampler, Pairs, Subsample };
std::uint64_t stream_seed(std::uint64_t run_seed, SeedStream stream);

struct SgdOptions {
  double learning_rate = 0.0005;
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

// Classical momentum with coupled weight decay:
//   g' = g + wd * theta;  v = momentum * v + g';  theta -= lr * v
class Sgd {
 public:
  explicit Sgd(SgdOptions options) : options_(options) {}

  void step(std::vector<NamedTensor>& params, const std::vector<Tensor>& grads);
  const SgdOptions& options() const noexcept { return options_; }

 private:
  SgdOptions options_;
  std::vector<Tensor> velocity_;
};

struct ExperimentConfig {
  ModelSpec model;                // encoder input_dim is taken from the data
  std::string data_path;          // empty: generate `benchmark` in memory
  BenchmarkSpec benchmark;
  std::string checkpoint_path;    // pretrained model for adapt/eval/...; empty: pretrain first
  std::size_t pretrain_epochs = 50;
  std::size_t adapt_epochs = 100;
  std::size_t pretrain_batch = 10;
  std::size_t total_batch = 50;
  LossWeights etas;
  double mu = 0.9;
  LambdaSchedule lambda_schedule = LambdaSchedule::Constant;
  double lambda = 1.0;
  SgdOptions optimizer;
  PriorDistribution prior;
  bool pseudo_skip_nearest = false;
  std::uint64_t seed = 7;
  std::string out_dir = "runs/default";
  std::vector<double> sweep_fractions{0.3, 0.5, 1.0};
};

struct MetricsRecord {
  std::string phase;  // "pretrain" or "adapt"
  std::size_t epoch = 0;
  LossBreakdown losses;  // epoch means of the per-step values
  double acc_source = 0.0;
  double auc_source = 0.0;
  double acc_target = 0.0;
  double auc_target = 0.0;
  double d_inter = 0.0;
  double d_intra_source = 0.0;
  double d_intra_target = 0.0;
  std::size_t steps = 0;
  std::size_t scbs_empty_steps = 0;  // steps whose pair set was empty or unbuildable
  double wall_time = 0.0;            // seconds; kept out of the metrics stream
};

// One JSON object per line. wall_time is omitted so identical runs produce
// identical bytes.
std::string metrics_line(const MetricsRecord& record);
std::string metrics_stream(const std::vector<MetricsRecord>& records);

struct EvalResult {
  double acc = 0.0;
  double auc = 0.0;
  std::size_t samples = 0;
};

// P(score of a random fake > score of a random real), ties count 1/2.
// Throws AucUndefinedError unless both classes are present.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);

// Accuracy under argmax and AUC of the fake-class probability.
EvalResult evaluate(const Model& model, const LabeledSet& eval_set);
EvalResult evaluate(const Model& model, const Dataset& data, Domain domain);

struct TrainResult {
  Model model;
  std::vector<MetricsRecord> metrics;
  std::vector<LossBreakdown> step_losses;  // one per optimizer step
};

// Supervised CE on the labeled source domain only.
TrainResult pretrain(const ExperimentConfig& config, const Dataset& data);

// Joint adaptation from `start`. The optimizer only sees source_view() and
// target_view(); ground truth is read solely for the per-epoch evaluation.
TrainResult adapt(const ExperimentConfig& config, const Model& start, const Dataset& data);

struct AblationRow {
  std::string variant;
  bool ddo = true, scbs = true, adc = true;
  EvalResult source, target;
  double delta_acc_points = 0.0;  // target accuracy minus the full variant's, in points
  std::string pretrain_hash;
};

// Reporting tolerance for "full variant is at least as accurate", in points.
inline constexpr double kAblationTolerancePoints = 0.5;

// full, -DDO (eta1 = 0), -SCBS (eta2 = 0), -ADC (eta3 = 0), all from `pretrained`.
std::vector<AblationRow> run_ablation(const ExperimentConfig& config, const Model& pretrained,
                                      const Dataset& data);
std::string ablation_table(const std::vector<AblationRow>& rows);

struct SweepRow {
  double fraction = 1.0;
  std::size_t target_used = 0;
  EvalResult target;  // on the full target domain
  EvalResult source;
};

std::vector<SweepRow> data_efficiency_sweep(const ExperimentConfig& config,
                                            const Model& pretrained, const Dataset& data,
                                            const std::vector<double>& fractions);
std::string sweep_table(const std::vector<SweepRow>& rows);

std::string summary_table(const std::vector<MetricsRecord>& records);

// CSV id,domain,true_label,f0..f{k-1} of encoder features for every record.
std::string embeddings_csv(const Model& model, const Dataset& data);
void dump_embeddings(const Model& model, const Dataset& data, const std::string& path);

// Hex FNV-1a of the serialized checkpoint.
std::string checkpoint_hash(const Model& model);

// Loads config.data_path or generates config.benchmark.
Dataset load_or_generate(const ExperimentConfig& config);

}  // namespace dalign
