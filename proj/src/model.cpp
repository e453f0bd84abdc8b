#include "dalign/model.hpp"

#include <cmath>
#include <sstream>

#include "dalign/error.hpp"
#include "dalign/random.hpp"
#include "dalign/textio.hpp"

namespace dalign {

namespace {

constexpr std::string_view kCheckpointMagic = "dalign-checkpoint 1";

std::vector<std::size_t> layer_widths(std::size_t in, const std::vector<std::size_t>& hidden,
                                      std::size_t out) {
  std::vector<std::size_t> widths{in};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  return widths;
}

void append_layers(std::vector<NamedTensor>& params, const std::string& part,
                   const std::vector<std::size_t>& widths) {
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const std::string prefix = part + "." + std::to_string(k);
    params.push_back({prefix + ".weight", Tensor(Shape{widths[k], widths[k + 1]})});
    params.push_back({prefix + ".bias", Tensor(Shape{widths[k + 1]})});
  }
}

// Affine layers starting at parameter slot `first`, ReLU between them.
NodeId mlp(Graph& g, const BoundModel& b, std::size_t first, std::size_t layers, NodeId x) {
  NodeId h = x;
  for (std::size_t k = 0; k < layers; ++k) {
    const NodeId w = b.nodes[first + 2 * k];
    const NodeId bias = b.nodes[first + 2 * k + 1];
    if (g.shape(h).size() != 2 || g.shape(h)[1] != g.shape(w)[0]) {
      throw ShapeError("layer expects [B x " + std::to_string(g.shape(w)[0]) + "], got " +
                       shape_to_string(g.shape(h)));
    }
    h = g.add(g.matmul(h, w), bias);
    if (k + 1 < layers) h = g.relu(h);
  }
  return h;
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw FinitenessError(std::string(what) + " contains non-finite values");
}

std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string out = std::to_string(dims.size());
  for (std::size_t d : dims) out += " " + std::to_string(d);
  return out;
}

}  // namespace

void EncoderSpec::validate() const {
  if (input_dim < 1) throw ConfigError("encoder input_dim must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw ConfigError("encoder hidden dims must be >= 1");
  }
  if (feature_dim < 2) throw ConfigError("encoder feature_dim must be >= 2");
}

void ModelSpec::validate() const {
  encoder.validate();
  if (domain_classifier.feature_dim != encoder.feature_dim) {
    throw ConfigError("domain classifier feature_dim " +
                      std::to_string(domain_classifier.feature_dim) +
                      " does not match encoder feature_dim " +
                      std::to_string(encoder.feature_dim));
  }
  for (std::size_t h : domain_classifier.hidden_dims) {
    if (h < 1) throw ConfigError("domain classifier hidden dims must be >= 1");
  }
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  append_layers(params_, "encoder",
                layer_widths(spec_.encoder.input_dim, spec_.encoder.hidden_dims,
                             spec_.encoder.feature_dim));
  append_layers(params_, "head", {spec_.encoder.feature_dim, HeadSpec::num_classes});
  append_layers(params_, "adc",
                layer_widths(spec_.encoder.feature_dim, spec_.domain_classifier.hidden_dims, 1));
}

Model Model::initialize(ModelSpec spec, std::uint64_t seed) {
  Model m(std::move(spec));
  Rng rng(seed);
  for (NamedTensor& p : m.params_) {
    if (p.value.rank() != 2) continue;
    const auto fan_in = static_cast<double>(p.value.shape()[0]);
    const auto fan_out = static_cast<double>(p.value.shape()[1]);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : p.value.values()) v = rng.uniform(-a, a);
  }
  return m;
}

Tensor& Model::parameter(std::string_view name) {
  for (NamedTensor& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

const Tensor& Model::parameter(std::string_view name) const {
  return const_cast<Model*>(this)->parameter(name);
}

bool operator==(const Model& a, const Model& b) {
  return a.spec_.encoder.input_dim == b.spec_.encoder.input_dim &&
         a.spec_.encoder.hidden_dims == b.spec_.encoder.hidden_dims &&
         a.spec_.encoder.feature_dim == b.spec_.encoder.feature_dim &&
         a.spec_.domain_classifier.hidden_dims == b.spec_.domain_classifier.hidden_dims &&
         a.params_ == b.params_;
}

BoundModel bind_model(Graph& graph, const Model& model, bool trainable) {
  BoundModel b;
  b.encoder_layers = model.encoder_layers();
  b.adc_layers = model.adc_layers();
  for (const NamedTensor& p : model.parameters()) {
    b.nodes.push_back(trainable ? graph.parameter(p.value, p.name) : graph.constant(p.value));
  }
  return b;
}

NodeId encode(Graph& graph, const BoundModel& bound, NodeId batch) {
  return mlp(graph, bound, 0, bound.encoder_layers, batch);
}

NodeId class_logits(Graph& graph, const BoundModel& bound, NodeId features) {
  return mlp(graph, bound, 2 * bound.encoder_layers, 1, features);
}

NodeId domain_logits(Graph& graph, const BoundModel& bound, NodeId features) {
  const NodeId out = mlp(graph, bound, 2 * bound.encoder_layers + 2, bound.adc_layers, features);
  return graph.pick(out, std::vector<std::size_t>(graph.shape(out)[0], 0));
}

std::vector<Tensor> collect_gradients(const BoundModel& bound, const Gradients& grads) {
  std::vector<Tensor> out;
  out.reserve(bound.nodes.size());
  for (NodeId n : bound.nodes) out.push_back(grads.at(n));
  return out;
}

Tensor encode(const Model& model, const Tensor& batch) {
  check_finite(batch, "encoder input");
  Graph g;
  const BoundModel b = bind_model(g, model, false);
  return forward(g, encode(g, b, g.constant(batch)));
}

Tensor classify(const Model& model, const Tensor& features) {
  check_finite(features, "features");
  Graph g;
  const BoundModel b = bind_model(g, model, false);
  return forward(g, g.softmax(class_logits(g, b, g.constant(features))));
}

Tensor domain_logit(const Model& model, const Tensor& features) {
  check_finite(features, "features");
  Graph g;
  const BoundModel b = bind_model(g, model, false);
  return forward(g, domain_logits(g, b, g.constant(features)));
}

Tensor grad_reverse(const Tensor& features, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("gradient reversal lambda must be finite and >= 0");
  }
  return features;
}

double reversal_lambda(LambdaSchedule schedule, double base, std::size_t epoch,
                       std::size_t total_epochs) {
  if (schedule == LambdaSchedule::Constant) return base;
  if (total_epochs == 0) throw ConfigError("progressive lambda needs total_epochs >= 1");
  const double p = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return base * (2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0);
}

std::string serialize_checkpoint(const Model& model) {
  std::ostringstream out;
  const ModelSpec& s = model.spec();
  out << kCheckpointMagic << '\n';
  out << "encoder " << s.encoder.input_dim << ' ' << s.encoder.feature_dim << ' '
      << join_dims(s.encoder.hidden_dims) << '\n';
  out << "adc " << join_dims(s.domain_classifier.hidden_dims) << '\n';
  for (const NamedTensor& p : model.parameters()) {
    out << "tensor " << p.name << ' ' << join_dims(p.value.shape()) << '\n';
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (i) out << ' ';
      out << format_double(p.value[i]);
    }
    out << '\n';
  }
  out << "end\n";
  return out.str();
}

Model parse_checkpoint(std::string_view text) {
  std::vector<std::string_view> lines = split(text, '\n');
  std::size_t ln = 0;
  auto next = [&]() -> std::string_view {
    if (ln >= lines.size()) throw ParseError(ln, "truncated checkpoint");
    return lines[ln++];
  };
  auto words = [](std::string_view line) {
    std::vector<std::string_view> w;
    for (auto part : split(line, ' ')) {
      if (!part.empty()) w.push_back(part);
    }
    return w;
  };
  auto dims_from = [&](const std::vector<std::string_view>& w, std::size_t at) {
    if (at >= w.size()) throw ParseError(ln, "missing dimension count");
    const auto count = static_cast<std::size_t>(parse_int(w[at]));
    if (w.size() != at + 1 + count) throw ParseError(ln, "dimension count mismatch");
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; i < count; ++i) {
      dims.push_back(static_cast<std::size_t>(parse_int(w[at + 1 + i])));
    }
    return dims;
  };

  try {
    if (trim(next()) != kCheckpointMagic) throw ParseError(ln, "not a dalign checkpoint");

    ModelSpec spec;
    auto enc = words(next());
    if (enc.size() < 4 || enc[0] != "encoder") throw ParseError(ln, "expected encoder line");
    spec.encoder.input_dim = static_cast<std::size_t>(parse_int(enc[1]));
    spec.encoder.feature_dim = static_cast<std::size_t>(parse_int(enc[2]));
    spec.encoder.hidden_dims = dims_from(enc, 3);
    auto adc = words(next());
    if (adc.size() < 2 || adc[0] != "adc") throw ParseError(ln, "expected adc line");
    spec.domain_classifier.hidden_dims = dims_from(adc, 1);
    spec.domain_classifier.feature_dim = spec.encoder.feature_dim;

    Model model(spec);
    for (NamedTensor& p : model.parameters()) {
      auto head = words(next());
      if (head.size() < 3 || head[0] != "tensor" || head[1] != p.name) {
        throw ParseError(ln, "expected tensor " + p.name);
      }
      if (dims_from(head, 2) != p.value.shape()) {
        throw ParseError(ln, "shape mismatch for " + p.name);
      }
      auto vals = words(next());
      if (vals.size() != p.value.size()) throw ParseError(ln, "value count mismatch for " + p.name);
      for (std::size_t i = 0; i < vals.size(); ++i) p.value[i] = parse_double(vals[i]);
    }
    if (trim(next()) != "end") throw ParseError(ln, "expected end marker");
    return model;
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(ln, e.what());
  }
}

void save_checkpoint(const Model& model, const std::string& path) {
  write_file(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

}  // namespace dalign
