#include "dalign/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dalign/error.hpp"
#include "dalign/textio.hpp"

namespace dalign {

namespace {

constexpr std::size_t kMixtureComponents = 2;
constexpr double kMixtureSpread = 1.5;
constexpr double kMethodSpread = 0.8;
constexpr double kMinAngle = 0.08 * std::numbers::pi;
constexpr double kAngleRange = 0.06 * std::numbers::pi;

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) { return std::inner_product(a.begin(), a.end(), b.begin(), 0.0); }

// a -= (a . unit) unit
void remove_component(Vec& a, const Vec& unit) {
  const double along = dot(a, unit);
  for (std::size_t j = 0; j < a.size(); ++j) a[j] -= along * unit[j];
}

void normalize(Vec& a) {
  const double n = std::sqrt(dot(a, a));
  for (double& v : a) v /= n;
}

Vec random_vector(Rng& rng, std::size_t d) {
  Vec v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

// Rotation in the plane spanned by orthonormal p1, p2, then an offset.
struct MethodTransform {
  double angle = 0.0;
  Vec offset;
};

MethodTransform method_transform(const std::string& method_id, std::size_t d, const Vec& artifact) {
  Rng rng(fnv1a(method_id));
  MethodTransform t;
  t.angle = kMinAngle + kAngleRange * rng.uniform();
  t.offset = artifact;
  for (double& v : t.offset) v += kMethodSpread * rng.normal() / std::sqrt(static_cast<double>(d));
  return t;
}

void apply_transform(const MethodTransform& t, const Vec& p1, const Vec& p2, Vec& x) {
  const double a = dot(x, p1), b = dot(x, p2);
  const double c = std::cos(t.angle) - 1.0, s = std::sin(t.angle);
  for (std::size_t j = 0; j < x.size(); ++j) {
    x[j] += c * (a * p1[j] + b * p2[j]) + s * (a * p2[j] - b * p1[j]) + t.offset[j];
  }
}

std::string sample_id(char prefix, std::size_t i) {
  std::string num = std::to_string(i);
  return std::string(1, prefix) + std::string(num.size() < 5 ? 5 - num.size() : 0, '0') + num;
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

Label parse_label(std::string_view s, std::size_t line) {
  if (s == "real") return Label::Real;
  if (s == "fake") return Label::Fake;
  if (s.empty()) return Label::Unknown;
  throw ParseError(line, "unknown label '" + std::string(s) + "'");
}

Tensor stack_rows(const Dataset& data, const std::vector<std::size_t>& which) {
  Tensor t(Shape{which.size(), data.feature_dim});
  for (std::size_t r = 0; r < which.size(); ++r) {
    const auto& f = data.records[which[r]].features;
    std::copy(f.begin(), f.end(), t.values().begin() + static_cast<std::ptrdiff_t>(r * data.feature_dim));
  }
  return t;
}

std::vector<std::size_t> domain_rows(const Dataset& data, Domain d) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (data.records[i].domain == d) rows.push_back(i);
  }
  return rows;
}

}  // namespace

const char* to_string(Domain d) { return d == Domain::Source ? "source" : "target"; }

const char* to_string(Label l) {
  switch (l) {
    case Label::Real: return "real";
    case Label::Fake: return "fake";
    case Label::Unknown: return "";
  }
  return "";
}

std::size_t Dataset::count(Domain d) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [d](const SampleRecord& r) { return r.domain == d; }));
}

std::vector<double> BenchmarkSpec::default_shift(std::size_t feature_dim) {
  // Length 5 along an alternating-sign diagonal.
  std::vector<double> v(feature_dim);
  const double c = 5.0 / std::sqrt(static_cast<double>(feature_dim));
  for (std::size_t i = 0; i < feature_dim; ++i) v[i] = (i % 2 == 0) ? c : -c;
  return v;
}

std::vector<double> BenchmarkSpec::effective_shift() const {
  return shift_vector.empty() ? default_shift(feature_dim) : shift_vector;
}

void BenchmarkSpec::validate() const {
  if (feature_dim < 2) throw ConfigError("benchmark feature_dim must be >= 2");
  if (n_source < 1) throw ConfigError("benchmark needs at least one source sample");
  if (!(n_source < n_target)) {
    throw ConfigError("benchmark needs n_source < n_target, got " + std::to_string(n_source) +
                      " vs " + std::to_string(n_target));
  }
  if (source_methods.empty() || target_methods.empty()) {
    throw ConfigError("each domain needs at least one forgery method");
  }
  for (const auto& m : source_methods) {
    if (std::find(target_methods.begin(), target_methods.end(), m) != target_methods.end()) {
      throw DisjointnessError("forgery method '" + m + "' appears in both domains");
    }
  }
  for (const auto* list : {&source_methods, &target_methods}) {
    for (const auto& m : *list) {
      if (m.empty() || m.find_first_of(",;\n\r") != std::string::npos) {
        throw ConfigError("invalid method id '" + m + "'");
      }
    }
  }
  if (!shift_vector.empty() && shift_vector.size() != feature_dim) {
    throw ConfigError("shift_vector has " + std::to_string(shift_vector.size()) +
                      " components, expected " + std::to_string(feature_dim));
  }
  if (!(noise_scale > 0.0)) throw ConfigError("noise_scale must be > 0");
  if (!(artifact_strength > 0.0)) throw ConfigError("artifact_strength must be > 0");
  if (!(rotation_shift_cosine >= -1.0 && rotation_shift_cosine <= 1.0)) {
    throw ConfigError("rotation_shift_cosine must lie in [-1, 1]");
  }
  if (!(fake_fraction > 0.0 && fake_fraction < 1.0)) {
    throw ConfigError("fake_fraction must lie in (0, 1)");
  }
}

Dataset generate_benchmark(const BenchmarkSpec& spec) {
  spec.validate();
  const std::size_t d = spec.feature_dim;
  Rng rng(spec.seed);

  // Two mixture components at +m and -m. Forgery rotations act in the plane
  // of m and a second direction p2 whose cosine with the shift (taken
  // orthogonal to m) is rotation_shift_cosine.
  Vec m = random_vector(rng, d);
  for (double& v : m) v *= kMixtureSpread;
  const std::vector<Vec> means{m, [&] { Vec n = m; for (double& v : n) v = -v; return n; }()};
  Vec p1 = m;
  normalize(p1);
  const Vec shift = spec.effective_shift();
  Vec p2 = random_vector(rng, d);
  remove_component(p2, p1);
  Vec lean = shift;
  remove_component(lean, p1);
  if (dot(lean, lean) > 1e-24) {
    normalize(lean);
    remove_component(p2, lean);
    normalize(p2);
    const double c = spec.rotation_shift_cosine;
    for (std::size_t j = 0; j < d; ++j) p2[j] = c * lean[j] + std::sqrt(1.0 - c * c) * p2[j];
  }
  normalize(p2);
  Vec artifact = random_vector(rng, d);
  normalize(artifact);
  for (double& v : artifact) v *= spec.artifact_strength;

  Dataset data;
  data.feature_dim = d;
  auto emit = [&](Domain domain, std::size_t count, const std::vector<std::string>& methods) {
    std::vector<MethodTransform> transforms;
    for (const auto& m : methods) transforms.push_back(method_transform(m, d, artifact));
    const char prefix = domain == Domain::Source ? 's' : 't';
    for (std::size_t i = 0; i < count; ++i) {
      const auto& mean = means[rng.below(kMixtureComponents)];
      std::vector<double> x(d);
      for (std::size_t j = 0; j < d; ++j) x[j] = mean[j] + spec.noise_scale * rng.normal();
      SampleRecord rec;
      rec.id = sample_id(prefix, i);
      rec.domain = domain;
      Label truth = Label::Real;
      if (rng.uniform() < spec.fake_fraction) {
        const std::size_t k = rng.below(methods.size());
        apply_transform(transforms[k], p1, p2, x);
        rec.method_id = methods[k];
        truth = Label::Fake;
      }
      if (domain == Domain::Target) {
        for (std::size_t j = 0; j < d; ++j) x[j] += shift[j];
      }
      rec.label = domain == Domain::Source ? truth : Label::Unknown;
      rec.features = std::move(x);
      data.records.push_back(std::move(rec));
      data.ground_truth.push_back(truth);
    }
  };
  emit(Domain::Source, spec.n_source, spec.source_methods);
  emit(Domain::Target, spec.n_target, spec.target_methods);
  return data;
}

std::string describe_spec(const BenchmarkSpec& spec) {
  std::vector<std::string> shift;
  for (double v : spec.effective_shift()) shift.push_back(format_double(v));
  std::ostringstream out;
  out << "feature_dim=" << spec.feature_dim << '\n'
      << "n_source=" << spec.n_source << '\n'
      << "n_target=" << spec.n_target << '\n'
      << "source_methods=" << join(spec.source_methods, ';') << '\n'
      << "target_methods=" << join(spec.target_methods, ';') << '\n'
      << "shift_vector=" << join(shift, ',') << '\n'
      << "noise_scale=" << format_double(spec.noise_scale) << '\n'
      << "fake_fraction=" << format_double(spec.fake_fraction) << '\n'
      << "artifact_strength=" << format_double(spec.artifact_strength) << '\n'
      << "rotation_shift_cosine=" << format_double(spec.rotation_shift_cosine) << '\n'
      << "seed=" << spec.seed << '\n';
  return out.str();
}

std::string serialize_dataset(const Dataset& data) {
  std::string out = "id,domain,label,method_id";
  for (std::size_t j = 0; j < data.feature_dim; ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const SampleRecord& r = data.records[i];
    out += r.id;
    out += ',';
    out += to_string(r.domain);
    out += ',';
    out += to_string(data.ground_truth.empty() ? r.label : data.ground_truth[i]);
    out += ',';
    out += r.method_id;
    for (double v : r.features) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(1, "empty dataset file");

  auto header = split(trim(lines[0]), ',');
  if (header.size() < 4 || header[0] != "id" || header[1] != "domain" || header[2] != "label" ||
      header[3] != "method_id") {
    throw ParseError(1, "header must start with id,domain,label,method_id");
  }
  Dataset data;
  data.feature_dim = header.size() - 4;
  for (std::size_t j = 0; j < data.feature_dim; ++j) {
    if (header[4 + j] != "f" + std::to_string(j)) {
      throw ParseError(1, "expected column f" + std::to_string(j));
    }
  }
  if (data.feature_dim == 0) throw ParseError(1, "no feature columns");

  std::unordered_map<std::string, std::size_t> seen;
  bool target_labels = false;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line = li + 1;
    std::string_view row = lines[li];
    if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
    auto cells = split(row, ',');
    if (cells.size() != 4 + data.feature_dim) {
      throw ParseError(line, "expected " + std::to_string(data.feature_dim) + " features, got " +
                                 std::to_string(cells.size() < 4 ? 0 : cells.size() - 4));
    }
    SampleRecord rec;
    rec.id = std::string(cells[0]);
    if (rec.id.empty()) throw ParseError(line, "empty id");
    if (auto [it, fresh] = seen.emplace(rec.id, line); !fresh) {
      throw DuplicateIdError("line " + std::to_string(line) + ": id '" + rec.id +
                             "' already used on line " + std::to_string(it->second));
    }
    if (cells[1] == "source") {
      rec.domain = Domain::Source;
    } else if (cells[1] == "target") {
      rec.domain = Domain::Target;
    } else {
      throw ParseError(line, "unknown domain '" + std::string(cells[1]) + "'");
    }
    const Label label = parse_label(cells[2], line);
    rec.method_id = std::string(cells[3]);
    if (rec.domain == Domain::Source && label == Label::Unknown) {
      throw ParseError(line, "source row without a real/fake label");
    }
    if (label == Label::Fake && rec.method_id.empty()) {
      throw ParseError(line, "fake row without method_id");
    }
    if (label == Label::Real && !rec.method_id.empty()) {
      throw ParseError(line, "real row with a method_id");
    }
    rec.features.reserve(data.feature_dim);
    for (std::size_t j = 0; j < data.feature_dim; ++j) {
      double v = 0.0;
      try {
        v = parse_double(cells[4 + j]);
      } catch (const Error& e) {
        throw ParseError(line, e.what());
      }
      if (!std::isfinite(v)) throw ParseError(line, "non-finite feature");
      rec.features.push_back(v);
    }
    if (rec.domain == Domain::Target) {
      target_labels = target_labels || label != Label::Unknown;
      rec.label = Label::Unknown;
    } else {
      rec.label = label;
    }
    data.ground_truth.push_back(label);
    data.records.push_back(std::move(rec));
  }
  if (target_labels) {
    data.warnings.push_back(
        "target rows carry labels; they are kept as evaluation ground truth only");
  }
  return data;
}

void write_dataset(const Dataset& data, const std::string& path) {
  write_file(path, serialize_dataset(data));
}

Dataset load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

Dataset subsample_target(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("target fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  std::vector<std::size_t> target = domain_rows(data, Domain::Target);
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(target.size())));
  if (keep < 2) {
    throw ConfigError("target fraction " + format_double(fraction) + " leaves " +
                      std::to_string(keep) + " samples; at least 2 are needed");
  }
  if (fraction == 1.0) return data;

  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(target));
  target.resize(keep);
  std::set<std::size_t> kept(target.begin(), target.end());

  Dataset out;
  out.feature_dim = data.feature_dim;
  out.warnings = data.warnings;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (data.records[i].domain == Domain::Target && !kept.count(i)) continue;
    out.records.push_back(data.records[i]);
    out.ground_truth.push_back(data.ground_truth[i]);
  }
  return out;
}

LabeledSet source_view(const Dataset& data) {
  auto rows = domain_rows(data, Domain::Source);
  LabeledSet s;
  for (std::size_t i : rows) {
    const SampleRecord& r = data.records[i];
    if (r.label == Label::Unknown) {
      throw SchemaError("source sample '" + r.id + "' has no real/fake label");
    }
    s.ids.push_back(r.id);
    s.labels.push_back(r.label == Label::Fake ? 1 : 0);
  }
  s.features = stack_rows(data, rows);
  return s;
}

UnlabeledSet target_view(const Dataset& data) {
  auto rows = domain_rows(data, Domain::Target);
  UnlabeledSet t;
  for (std::size_t i : rows) t.ids.push_back(data.records[i].id);
  t.features = stack_rows(data, rows);
  return t;
}

LabeledSet evaluation_view(const Dataset& data, Domain domain) {
  auto rows = domain_rows(data, domain);
  LabeledSet s;
  for (std::size_t i : rows) {
    const Label truth = data.ground_truth.empty() ? data.records[i].label : data.ground_truth[i];
    if (truth == Label::Unknown) {
      throw SchemaError("sample '" + data.records[i].id + "' has no ground truth for evaluation");
    }
    s.ids.push_back(data.records[i].id);
    s.labels.push_back(truth == Label::Fake ? 1 : 0);
  }
  s.features = stack_rows(data, rows);
  return s;
}

BatchPlan batch_split(std::size_t n, std::size_t m, std::size_t total) {
  if (total < 2) throw ConfigError("total batch size must be >= 2, got " + std::to_string(total));
  if (n < 1 || m < 1) throw ConfigError("batch_split needs n >= 1 and m >= 1");
  const double share = static_cast<double>(total) * static_cast<double>(n) /
                       static_cast<double>(n + m);
  const auto rounded = static_cast<std::size_t>(std::llround(share));
  const std::size_t b_source = std::clamp<std::size_t>(rounded, 1, total - 1);
  return BatchPlan{b_source, total - b_source, total};
}

JointBatchSampler::JointBatchSampler(std::size_t n_source, std::size_t n_target, BatchPlan plan,
                                     Rng& rng)
    : source_order_(n_source), target_order_(n_target), plan_(plan), rng_(&rng) {
  if (plan.b_source > n_source || plan.b_target > n_target) {
    throw ConfigError("batch plan (" + std::to_string(plan.b_source) + ", " +
                      std::to_string(plan.b_target) + ") exceeds dataset sizes (" +
                      std::to_string(n_source) + ", " + std::to_string(n_target) + ")");
  }
  start_epoch();
}

void JointBatchSampler::start_epoch() {
  for (std::size_t i = 0; i < source_order_.size(); ++i) source_order_[i] = i;
  for (std::size_t i = 0; i < target_order_.size(); ++i) target_order_[i] = i;
  rng_->shuffle(std::span<std::size_t>(source_order_));
  rng_->shuffle(std::span<std::size_t>(target_order_));
  source_pos_ = target_pos_ = 0;
}

std::optional<JointIndices> JointBatchSampler::next() {
  if (source_pos_ + plan_.b_source > source_order_.size() ||
      target_pos_ + plan_.b_target > target_order_.size()) {
    return std::nullopt;
  }
  JointIndices out;
  auto take = [](const std::vector<std::size_t>& order, std::size_t& pos, std::size_t k) {
    std::vector<std::size_t> v(order.begin() + static_cast<std::ptrdiff_t>(pos),
                               order.begin() + static_cast<std::ptrdiff_t>(pos + k));
    pos += k;
    return v;
  };
  out.source = take(source_order_, source_pos_, plan_.b_source);
  out.target = take(target_order_, target_pos_, plan_.b_target);
  return out;
}

std::size_t JointBatchSampler::batches_per_epoch() const {
  return std::min(source_order_.size() / plan_.b_source, target_order_.size() / plan_.b_target);
}

SourceBatch gather(const LabeledSet& set, const std::vector<std::size_t>& rows) {
  const std::size_t d = set.features.cols();
  SourceBatch b;
  b.features = Tensor(Shape{rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = set.features.row(rows[r]);
    std::copy(src.begin(), src.end(), b.features.values().begin() + static_cast<std::ptrdiff_t>(r * d));
    b.ids.push_back(set.ids[rows[r]]);
    b.labels.push_back(set.labels[rows[r]]);
  }
  return b;
}

TargetBatch gather(const UnlabeledSet& set, const std::vector<std::size_t>& rows) {
  const std::size_t d = set.features.cols();
  TargetBatch b;
  b.features = Tensor(Shape{rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = set.features.row(rows[r]);
    std::copy(src.begin(), src.end(), b.features.values().begin() + static_cast<std::ptrdiff_t>(r * d));
    b.ids.push_back(set.ids[rows[r]]);
  }
  return b;
}

std::optional<std::pair<SourceBatch, TargetBatch>> sample_joint_batch(
    const LabeledSet& source, const UnlabeledSet& target, JointBatchSampler& sampler) {
  auto idx = sampler.next();
  if (!idx) return std::nullopt;
  return std::make_pair(gather(source, idx->source), gather(target, idx->target));
}

}  // namespace dalign
