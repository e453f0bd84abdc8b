#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dalign/random.hpp"
#include "dalign/tensor.hpp"

namespace dalign {

enum class Domain { Source, Target };
enum class Label { Real, Fake, Unknown };

const char* to_string(Domain d);
const char* to_string(Label l);

struct SampleRecord {
  std::string id;
  Domain domain = Domain::Source;
  Label label = Label::Unknown;  // always Unknown for target rows
  std::string method_id;         // empty for real samples
  std::vector<double> features;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

// A loaded or generated benchmark. Target ground truth lives in a parallel
// array that only evaluation reads; training consumes the views below.
struct Dataset {
  std::size_t feature_dim = 0;
  std::vector<SampleRecord> records;
  std::vector<Label> ground_truth;    // parallel to records
  std::vector<std::string> warnings;  // not part of equality

  std::size_t count(Domain d) const;
  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.feature_dim == b.feature_dim && a.records == b.records &&
           a.ground_truth == b.ground_truth;
  }
};

struct BenchmarkSpec {
  std::size_t feature_dim = 8;
  std::size_t n_source = 200;
  std::size_t n_target = 1800;
  std::vector<std::string> source_methods{"src_swap", "src_reenact"};
  std::vector<std::string> target_methods{"tgt_texture", "tgt_expression"};
  std::vector<double> shift_vector;  // empty means default_shift(feature_dim)
  double noise_scale = 0.6;
  double fake_fraction = 0.5;
  double artifact_strength = 1.0;     // length of the offset shared by all forgery methods
  double rotation_shift_cosine = 0.0;  // 0: forgery rotations act orthogonally to the shift
  std::uint64_t seed = 7;

  static std::vector<double> default_shift(std::size_t feature_dim);
  std::vector<double> effective_shift() const;

  // n_source < n_target, disjoint method sets, consistent dims.
  void validate() const;
};

// Real samples come from a two-component Gaussian mixture with means +m and
// -m. A fake sample is a real draw rotated by a method-specific angle in a
// plane shared by all methods, then offset by a shared artifact vector plus a
// method-specific one. Target samples are additionally translated by the
// shift vector. Deterministic in `spec`.
Dataset generate_benchmark(const BenchmarkSpec& spec);

std::string describe_spec(const BenchmarkSpec& spec);

// CSV with header id,domain,label,method_id,f0,...,f{d-1}.
std::string serialize_dataset(const Dataset& data);
Dataset parse_dataset(std::string_view text);
void write_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

// Keeps every source record and a seeded random `fraction` of target records.
Dataset subsample_target(const Dataset& data, double fraction, std::uint64_t seed);

struct LabeledSet {
  std::vector<std::string> ids;
  Tensor features;          // [n x d]
  std::vector<int> labels;  // 0 real, 1 fake
};

struct UnlabeledSet {
  std::vector<std::string> ids;
  Tensor features;  // [m x d]
};

// Source records with labels; throws SchemaError if one is unlabeled.
LabeledSet source_view(const Dataset& data);
// Target records with labels stripped.
UnlabeledSet target_view(const Dataset& data);
// Records of one domain with ground-truth labels, for evaluation only.
LabeledSet evaluation_view(const Dataset& data, Domain domain);

struct BatchPlan {
  std::size_t b_source = 0;
  std::size_t b_target = 0;
  std::size_t total = 0;
  friend bool operator==(const BatchPlan&, const BatchPlan&) = default;
};

// b_source = clamp(round(total * n / (n + m)), 1, total - 1).
BatchPlan batch_split(std::size_t n, std::size_t m, std::size_t total);

struct JointIndices {
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;
};

// Draws source and target indices without replacement within an epoch. An
// epoch ends as soon as either side cannot fill its share.
class JointBatchSampler {
 public:
  JointBatchSampler(std::size_t n_source, std::size_t n_target, BatchPlan plan, Rng& rng);

  void start_epoch();
  std::optional<JointIndices> next();
  std::size_t batches_per_epoch() const;
  const BatchPlan& plan() const noexcept { return plan_; }

 private:
  std::vector<std::size_t> source_order_, target_order_;
  std::size_t source_pos_ = 0, target_pos_ = 0;
  BatchPlan plan_;
  Rng* rng_;
};

struct SourceBatch {
  std::vector<std::string> ids;
  Tensor features;
  std::vector<int> labels;
};

struct TargetBatch {
  std::vector<std::string> ids;
  Tensor features;
};

SourceBatch gather(const LabeledSet& set, const std::vector<std::size_t>& rows);
TargetBatch gather(const UnlabeledSet& set, const std::vector<std::size_t>& rows);

// Next joint batch, or nullopt at epoch end.
std::optional<std::pair<SourceBatch, TargetBatch>> sample_joint_batch(
    const LabeledSet& source, const UnlabeledSet& target, JointBatchSampler& sampler);

}  // namespace dalign
