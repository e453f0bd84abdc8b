#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dalign/graph.hpp"
#include "dalign/tensor.hpp"

namespace dalign {

struct EncoderSpec {
  std::size_t input_dim = 8;
  std::vector<std::size_t> hidden_dims{32};
  std::size_t feature_dim = 16;

  void validate() const;
};

struct HeadSpec {
  static constexpr std::size_t num_classes = 2;  // real, fake
  std::size_t feature_dim = 16;
};

struct DomainClassifierSpec {
  std::size_t feature_dim = 16;
  std::vector<std::size_t> hidden_dims{16};
};

struct ModelSpec {
  EncoderSpec encoder;
  DomainClassifierSpec domain_classifier;

  HeadSpec head() const { return HeadSpec{encoder.feature_dim}; }
  void validate() const;
};

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Encoder E, class head F, and adversarial domain classifier, all fully
// connected with ReLU between hidden layers. Parameters are kept in a fixed
// order: encoder layers, head, domain classifier; each layer contributes
// `<part>.<k>.weight` [fan_in x fan_out] then `<part>.<k>.bias` [fan_out].
class Model {
 public:
  // All-zero parameters.
  explicit Model(ModelSpec spec);

  // Weights uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)); zero biases.
  static Model initialize(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }
  std::vector<NamedTensor>& parameters() noexcept { return params_; }
  const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
  Tensor& parameter(std::string_view name);
  const Tensor& parameter(std::string_view name) const;

  std::size_t encoder_layers() const noexcept { return spec_.encoder.hidden_dims.size() + 1; }
  std::size_t adc_layers() const noexcept { return spec_.domain_classifier.hidden_dims.size() + 1; }

  friend bool operator==(const Model&, const Model&);

 private:
  ModelSpec spec_;
  std::vector<NamedTensor> params_;
};

// Model parameters placed into a graph, one node per tensor, same order as
// Model::parameters().
struct BoundModel {
  std::vector<NodeId> nodes;
  std::size_t encoder_layers = 0;
  std::size_t adc_layers = 0;
};

// Trainable leaves when `trainable`, constants otherwise.
BoundModel bind_model(Graph& graph, const Model& model, bool trainable = true);

NodeId encode(Graph& graph, const BoundModel& bound, NodeId batch);
NodeId class_logits(Graph& graph, const BoundModel& bound, NodeId features);
NodeId domain_logits(Graph& graph, const BoundModel& bound, NodeId features);

// Gradients for every model parameter in Model::parameters() order.
std::vector<Tensor> collect_gradients(const BoundModel& bound, const Gradients& grads);

// Evaluation without building a training graph. Inputs must be finite.
Tensor encode(const Model& model, const Tensor& batch);            // [B x feature_dim]
Tensor classify(const Model& model, const Tensor& features);       // [B x 2], rows sum to 1
Tensor domain_logit(const Model& model, const Tensor& features);   // [B]

// Identity forward. Only meaningful inside a graph; provided for symmetry and
// to validate lambda.
Tensor grad_reverse(const Tensor& features, double lambda);

enum class LambdaSchedule { Constant, Progressive };

// Constant: `base`. Progressive: base * (2 / (1 + exp(-10 p)) - 1), p = epoch / total.
double reversal_lambda(LambdaSchedule schedule, double base, std::size_t epoch,
                       std::size_t total_epochs);

// Text checkpoint: header line, spec lines, then one `tensor` record per
// parameter with its values in shortest round-trip decimal form.
std::string serialize_checkpoint(const Model& model);
Model parse_checkpoint(std::string_view text);
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace dalign
