#include "dalign/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "dalign/error.hpp"
#include "dalign/random.hpp"
#include "dalign/scbs.hpp"
#include "dalign/textio.hpp"

namespace dalign {

namespace {

using Clock = std::chrono::steady_clock;

ModelSpec model_spec_for(const ExperimentConfig& config, const Dataset& data) {
  ModelSpec spec = config.model;
  spec.encoder.input_dim = data.feature_dim;
  spec.domain_classifier.feature_dim = spec.encoder.feature_dim;
  return spec;
}

void check_model_matches(const Model& model, const Dataset& data) {
  if (model.spec().encoder.input_dim != data.feature_dim) {
    throw ShapeError("model expects " + std::to_string(model.spec().encoder.input_dim) +
                     " input features, dataset has " + std::to_string(data.feature_dim));
  }
}

void accumulate(LossBreakdown& sum, const LossBreakdown& step) {
  sum.l_ce += step.l_ce;
  sum.l_dal += step.l_dal;
  sum.l_scbs += step.l_scbs;
  sum.l_adv += step.l_adv;
  sum.r += step.r;
  sum.total += step.total;
}

LossBreakdown mean_of(LossBreakdown sum, std::size_t steps, const LossWeights& w) {
  const double k = steps ? static_cast<double>(steps) : 1.0;
  sum.l_ce /= k;
  sum.l_dal /= k;
  sum.l_scbs /= k;
  sum.l_adv /= k;
  sum.r /= k;
  sum.total /= k;
  sum.weights = w;
  return sum;
}

// Per-epoch evaluation against ground truth, kept apart from the optimizer.
class EpochReporter {
 public:
  explicit EpochReporter(const Dataset& data)
      : source_(evaluation_view(data, Domain::Source)),
        target_(evaluation_view(data, Domain::Target)) {}

  void fill(MetricsRecord& rec, const Model& model, const Tensor* source_centroid,
            const Tensor* target_centroid) const {
    const EvalResult s = evaluate(model, source_);
    const EvalResult t = evaluate(model, target_);
    rec.acc_source = s.acc;
    rec.auc_source = s.auc;
    rec.acc_target = t.acc;
    rec.auc_target = t.auc;

    const Tensor fs = encode(model, source_.features);
    const Tensor ft = encode(model, target_.features);
    const Tensor cs = source_centroid ? *source_centroid : local_centroid(fs);
    const Tensor ct = target_centroid ? *target_centroid : local_centroid(ft);
    rec.d_inter = inter_domain_distance(cs, ct);
    rec.d_intra_source = intra_domain_distance(fs, cs);
    rec.d_intra_target = intra_domain_distance(ft, ct);
  }

 private:
  LabeledSet source_;
  LabeledSet target_;
};

struct StepResult {
  LossBreakdown losses;
  bool scbs_empty = false;
};

StepResult adapt_step(const ExperimentConfig& cfg, Model& model, Sgd& sgd,
                      const SourceBatch& sb, const TargetBatch& tb, CentroidTracker& track_s,
                      CentroidTracker& track_t, double w_intra, double lambda, Rng& pair_rng) {
  Graph g;
  const BoundModel b = bind_model(g, model);
  const NodeId fs = encode(g, b, g.constant(sb.features));
  const NodeId ft = encode(g, b, g.constant(tb.features));
  const NodeId zs = class_logits(g, b, fs);
  const NodeId zt = class_logits(g, b, ft);

  const NodeId l_ce = supervised_ce_loss(g, zs, sb.labels);
  const AlignmentNodes dal = domain_alignment_loss(g, fs, ft, track_s, track_t, w_intra);

  StepResult out;
  const PositivePairSet src_pairs = labeled_pairs(sb.labels, pair_rng);
  PositivePairSet tgt_pairs;
  try {
    tgt_pairs = pseudo_pairs(forward(g, ft), cfg.pseudo_skip_nearest);
  } catch (const InsufficientBatchError&) {
    out.scbs_empty = true;
  } catch (const DegenerateFeatureError&) {
    out.scbs_empty = true;
  }
  const NodeId f_all = g.concat_rows(fs, ft);
  const PositivePairSet pooled = pool_pairs(src_pairs, tgt_pairs, sb.features.rows());
  std::optional<NodeId> l_scbs;
  if (pooled.empty()) {
    out.scbs_empty = true;
  } else {
    try {
      l_scbs = scbs_loss(g, f_all, pooled);
      forward(g, *l_scbs);
    } catch (const DegenerateFeatureError&) {
      l_scbs.reset();
      out.scbs_empty = true;
    }
  }

  std::vector<int> domain_labels(sb.features.rows(), 1);
  domain_labels.resize(sb.features.rows() + tb.features.rows(), 0);
  const NodeId l_adv =
      adversarial_domain_loss(g, domain_logits(g, b, g.grad_reverse(f_all, lambda)), domain_labels);
  const NodeId r = diversity_regularizer(g, g.concat_rows(zs, zt), cfg.prior);

  const LossWeights& w = cfg.etas;
  NodeId total = g.add(l_ce, g.scale(dal.loss, w.eta1));
  if (l_scbs) total = g.add(total, g.scale(*l_scbs, w.eta2));
  total = g.add(total, g.scale(l_adv, w.eta3));
  total = g.add(total, g.scale(r, w.eta4));

  out.losses = total_loss(forward(g, l_ce).item(), forward(g, dal.loss).item(),
                          l_scbs ? forward(g, *l_scbs).item() : 0.0, forward(g, l_adv).item(),
                          forward(g, r).item(), w);

  const Tensor local_s = local_centroid(forward(g, fs));
  const Tensor local_t = local_centroid(forward(g, ft));
  const Gradients grads = backward(g, total);
  sgd.step(model.parameters(), collect_gradients(b, grads));
  track_s.update(local_s);
  track_t.update(local_t);
  return out;
}

LossBreakdown pretrain_step(const ExperimentConfig& cfg, Model& model, Sgd& sgd,
                            const SourceBatch& sb) {
  Graph g;
  const BoundModel b = bind_model(g, model);
  const NodeId loss = supervised_ce_loss(g, class_logits(g, b, encode(g, b, g.constant(sb.features))),
                                         sb.labels);
  const double value = forward(g, loss).item();
  const Gradients grads = backward(g, loss);
  sgd.step(model.parameters(), collect_gradients(b, grads));
  LossWeights none{0.0, 0.0, 0.0, 0.0};
  (void)cfg;
  return total_loss(value, 0.0, 0.0, 0.0, 0.0, none);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t run_seed, SeedStream stream) {
  switch (stream) {
    case SeedStream::Sampler: return run_seed ^ 0x9e3779b97f4a7c15ULL;
    case SeedStream::Pairs: return run_seed ^ 0xbf58476d1ce4e5b9ULL;
    case SeedStream::Subsample: return run_seed ^ 0x94d049bb133111ebULL;
  }
  return run_seed;
}

void Sgd::step(std::vector<NamedTensor>& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size()) {
    throw ShapeError("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  if (velocity_.empty()) {
    for (const NamedTensor& p : params) velocity_.emplace_back(p.value.shape());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = params[i].value;
    if (grads[i].shape() != theta.shape()) {
      throw ShapeError("gradient for " + params[i].name + " has shape " +
                       shape_to_string(grads[i].shape()));
    }
    Tensor& v = velocity_[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double g = grads[i][k] + options_.weight_decay * theta[k];
      v[k] = options_.momentum * v[k] + g;
      theta[k] -= options_.learning_rate * v[k];
    }
  }
}

std::string metrics_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["phase"] = r.phase;
  j["epoch"] = r.epoch;
  j["l_ce"] = r.losses.l_ce;
  j["l_dal"] = r.losses.l_dal;
  j["l_scbs"] = r.losses.l_scbs;
  j["l_adv"] = r.losses.l_adv;
  j["r"] = r.losses.r;
  j["total"] = r.losses.total;
  j["eta1"] = r.losses.weights.eta1;
  j["eta2"] = r.losses.weights.eta2;
  j["eta3"] = r.losses.weights.eta3;
  j["eta4"] = r.losses.weights.eta4;
  j["w_dal"] = r.losses.weights.eta1 * r.losses.l_dal;
  j["w_scbs"] = r.losses.weights.eta2 * r.losses.l_scbs;
  j["w_adv"] = r.losses.weights.eta3 * r.losses.l_adv;
  j["w_r"] = r.losses.weights.eta4 * r.losses.r;
  j["acc_source"] = r.acc_source;
  j["auc_source"] = r.auc_source;
  j["acc_target"] = r.acc_target;
  j["auc_target"] = r.auc_target;
  j["d_inter"] = r.d_inter;
  j["d_intra_source"] = r.d_intra_source;
  j["d_intra_target"] = r.d_intra_target;
  j["steps"] = r.steps;
  j["scbs_empty_steps"] = r.scbs_empty_steps;
  return j.dump();
}

std::string metrics_stream(const std::vector<MetricsRecord>& records) {
  std::string out;
  for (const MetricsRecord& r : records) {
    out += metrics_line(r);
    out += '\n';
  }
  return out;
}

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("auc: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney with mid-ranks; ranks are 1-based.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += mid_rank;
        ++positives;
      } else if (labels[order[k]] != 0) {
        throw LabelError("auc labels must be 0 or 1");
      }
    }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw AucUndefinedError("AUC needs both real and fake samples");
  }
  const double p = static_cast<double>(positives);
  const double wins = positive_rank_sum - p * (p + 1.0) / 2.0;
  return wins / (p * static_cast<double>(negatives));
}

EvalResult evaluate(const Model& model, const LabeledSet& set) {
  const std::size_t n = set.labels.size();
  if (n == 0) throw EmptyBatchError("evaluate on an empty set");
  const Tensor probs = classify(model, encode(model, set.features));
  std::vector<double> scores(n);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = probs.at(i, 1);
    const int predicted = probs.at(i, 1) > probs.at(i, 0) ? 1 : 0;
    if (predicted == set.labels[i]) ++correct;
  }
  EvalResult r;
  r.samples = n;
  r.acc = static_cast<double>(correct) / static_cast<double>(n);
  r.auc = auc_score(scores, set.labels);
  return r;
}

EvalResult evaluate(const Model& model, const Dataset& data, Domain domain) {
  check_model_matches(model, data);
  return evaluate(model, evaluation_view(data, domain));
}

TrainResult pretrain(const ExperimentConfig& cfg, const Dataset& data) {
  if (cfg.pretrain_batch < 1) throw ConfigError("pretrain_batch must be >= 1");
  const LabeledSet source = source_view(data);
  if (source.labels.empty()) throw SchemaError("no labeled source samples");
  const EpochReporter reporter(data);

  TrainResult result{Model::initialize(model_spec_for(cfg, data), cfg.seed), {}, {}};
  Sgd sgd(cfg.optimizer);
  Rng order_rng(stream_seed(cfg.seed, SeedStream::Sampler));
  std::vector<std::size_t> order(source.labels.size());

  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const auto started = Clock::now();
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(std::span<std::size_t>(order));
    LossBreakdown sum;
    std::size_t steps = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.pretrain_batch) {
      const std::size_t end = std::min(order.size(), pos + cfg.pretrain_batch);
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      LossBreakdown step = pretrain_step(cfg, result.model, sgd, gather(source, rows));
      result.step_losses.push_back(step);
      accumulate(sum, step);
      ++steps;
    }
    MetricsRecord rec;
    rec.phase = "pretrain";
    rec.epoch = epoch;
    rec.losses = mean_of(sum, steps, LossWeights{0.0, 0.0, 0.0, 0.0});
    rec.steps = steps;
    reporter.fill(rec, result.model, nullptr, nullptr);
    rec.wall_time = std::chrono::duration<double>(Clock::now() - started).count();
    result.metrics.push_back(rec);
  }
  return result;
}

TrainResult adapt(const ExperimentConfig& cfg, const Model& start, const Dataset& data) {
  check_model_matches(start, data);
  if (cfg.adapt_epochs < 1) throw ConfigError("adapt_epochs must be >= 1");
  const LabeledSet source = source_view(data);
  const UnlabeledSet target = target_view(data);
  const EpochReporter reporter(data);

  const BatchPlan plan = batch_split(source.labels.size(), target.ids.size(), cfg.total_batch);
  Rng sampler_rng(stream_seed(cfg.seed, SeedStream::Sampler));
  Rng pair_rng(stream_seed(cfg.seed, SeedStream::Pairs));
  JointBatchSampler sampler(source.labels.size(), target.ids.size(), plan, sampler_rng);

  const std::size_t dim = start.spec().encoder.feature_dim;
  CentroidTracker track_s(dim, cfg.mu);
  CentroidTracker track_t(dim, cfg.mu);

  TrainResult result{start, {}, {}};
  Sgd sgd(cfg.optimizer);

  for (std::size_t epoch = 0; epoch < cfg.adapt_epochs; ++epoch) {
    const auto started = Clock::now();
    const double w_intra = intra_weight(epoch, cfg.adapt_epochs);
    const double lambda = reversal_lambda(cfg.lambda_schedule, cfg.lambda, epoch, cfg.adapt_epochs);
    if (epoch > 0) sampler.start_epoch();

    LossBreakdown sum;
    MetricsRecord rec;
    while (auto batch = sample_joint_batch(source, target, sampler)) {
      StepResult step = adapt_step(cfg, result.model, sgd, batch->first, batch->second, track_s,
                                   track_t, w_intra, lambda, pair_rng);
      result.step_losses.push_back(step.losses);
      accumulate(sum, step.losses);
      ++rec.steps;
      if (step.scbs_empty) ++rec.scbs_empty_steps;
    }
    rec.phase = "adapt";
    rec.epoch = epoch;
    rec.losses = mean_of(sum, rec.steps, cfg.etas);
    reporter.fill(rec, result.model, &track_s.global(), &track_t.global());
    rec.wall_time = std::chrono::duration<double>(Clock::now() - started).count();
    result.metrics.push_back(rec);
  }
  return result;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& config, const Model& pretrained,
                                      const Dataset& data) {
  struct Variant {
    const char* name;
    bool ddo, scbs, adc;
  };
  const Variant variants[] = {{"full", true, true, true},
                              {"no_ddo", false, true, true},
                              {"no_scbs", true, false, true},
                              {"no_adc", true, true, false}};
  const std::string hash = checkpoint_hash(pretrained);

  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    ExperimentConfig cfg = config;
    if (!v.ddo) cfg.etas.eta1 = 0.0;
    if (!v.scbs) cfg.etas.eta2 = 0.0;
    if (!v.adc) cfg.etas.eta3 = 0.0;
    const TrainResult run = adapt(cfg, pretrained, data);
    AblationRow row;
    row.variant = v.name;
    row.ddo = v.ddo;
    row.scbs = v.scbs;
    row.adc = v.adc;
    row.source = evaluate(run.model, data, Domain::Source);
    row.target = evaluate(run.model, data, Domain::Target);
    row.pretrain_hash = hash;
    rows.push_back(row);
  }
  for (AblationRow& row : rows) {
    row.delta_acc_points = 100.0 * (row.target.acc - rows.front().target.acc);
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant,ddo,scbs,adc,acc_target,auc_target,acc_source,auc_source,delta_points,"
         "tolerance_points,full_not_worse,pretrain_hash\n";
  const double full = rows.empty() ? 0.0 : rows.front().target.acc;
  for (const AblationRow& r : rows) {
    const bool ok = 100.0 * full >= 100.0 * r.target.acc - kAblationTolerancePoints;
    out << r.variant << ',' << r.ddo << ',' << r.scbs << ',' << r.adc << ','
        << fixed(100.0 * r.target.acc, 2) << ',' << fixed(100.0 * r.target.auc, 2) << ','
        << fixed(100.0 * r.source.acc, 2) << ',' << fixed(100.0 * r.source.auc, 2) << ','
        << fixed(r.delta_acc_points, 2) << ',' << fixed(kAblationTolerancePoints, 2) << ','
        << (ok ? "yes" : "no") << ',' << r.pretrain_hash << '\n';
  }
  return out.str();
}

std::vector<SweepRow> data_efficiency_sweep(const ExperimentConfig& config,
                                            const Model& pretrained, const Dataset& data,
                                            const std::vector<double>& fractions) {
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw ConfigError("sweep fraction " + format_double(f) + " outside (0, 1]");
    }
  }
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    const Dataset subset = subsample_target(data, f, stream_seed(config.seed, SeedStream::Subsample));
    const TrainResult run = adapt(config, pretrained, subset);
    SweepRow row;
    row.fraction = f;
    row.target_used = subset.count(Domain::Target);
    row.target = evaluate(run.model, data, Domain::Target);
    row.source = evaluate(run.model, data, Domain::Source);
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "fraction,target_used,acc_target,auc_target,acc_source,auc_source\n";
  for (const SweepRow& r : rows) {
    out << format_double(r.fraction) << ',' << r.target_used << ',' << format_double(r.target.acc)
        << ',' << format_double(r.target.auc) << ',' << format_double(r.source.acc) << ','
        << format_double(r.source.auc) << '\n';
  }
  return out.str();
}

std::string summary_table(const std::vector<MetricsRecord>& records) {
  std::ostringstream out;
  out << "phase,epoch,l_ce,l_dal,l_scbs,l_adv,r,total,acc_source,auc_source,acc_target,"
         "auc_target,d_inter,d_intra_source,d_intra_target\n";
  for (const MetricsRecord& r : records) {
    const LossBreakdown& l = r.losses;
    out << r.phase << ',' << r.epoch;
    for (double v : {l.l_ce, l.l_dal, l.l_scbs, l.l_adv, l.r, l.total, r.acc_source, r.auc_source,
                     r.acc_target, r.auc_target, r.d_inter, r.d_intra_source, r.d_intra_target}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
  return out.str();
}

std::string embeddings_csv(const Model& model, const Dataset& data) {
  check_model_matches(model, data);
  Tensor inputs(Shape{data.records.size(), data.feature_dim});
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& f = data.records[i].features;
    std::copy(f.begin(), f.end(), inputs.values().begin() + static_cast<std::ptrdiff_t>(i * data.feature_dim));
  }
  const Tensor features = data.records.empty() ? Tensor(Shape{0, model.spec().encoder.feature_dim})
                                               : encode(model, inputs);
  const std::size_t k = model.spec().encoder.feature_dim;
  std::string out = "id,domain,true_label";
  for (std::size_t j = 0; j < k; ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const SampleRecord& r = data.records[i];
    out += r.id;
    out += ',';
    out += to_string(r.domain);
    out += ',';
    out += to_string(data.ground_truth.empty() ? r.label : data.ground_truth[i]);
    for (std::size_t j = 0; j < k; ++j) {
      out += ',';
      out += format_double(features.at(i, j));
    }
    out += '\n';
  }
  return out;
}

void dump_embeddings(const Model& model, const Dataset& data, const std::string& path) {
  write_file(path, embeddings_csv(model, data));
}

std::string checkpoint_hash(const Model& model) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(serialize_checkpoint(model))));
  return buf;
}

Dataset load_or_generate(const ExperimentConfig& config) {
  if (!config.data_path.empty()) return load_dataset(config.data_path);
  return generate_benchmark(config.benchmark);
}

}  // namespace dalign
