#include "ki67/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ki67/rng.hpp"
#include "tree_builder.hpp"

namespace ki67 {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sample_loss(int label, double margin) {
  return label == 1 ? softplus(-margin) : softplus(margin);
}

// Least-squares fit of the residuals: score(S) = (sum r)^2 / n.
struct ResidualCriterion {
  struct Stats {
    double sum = 0.0;
    double count = 0.0;
  };
  const std::vector<double>& residual;
  const std::vector<double>& hessian;
  const std::vector<double>& margin;
  const std::vector<int>& labels;
  double learning_rate;

  Stats empty() const { return {}; }
  void add(Stats& s, int i) const {
    s.sum += residual[i];
    s.count += 1.0;
  }
  void subtract(Stats& from, const Stats& part) const {
    from.sum -= part.sum;
    from.count -= part.count;
  }
  double score(const Stats& s) const { return s.count > 0 ? s.sum * s.sum / s.count : 0.0; }

  double leaf_loss(std::span<const int> samples, double value) const {
    double loss = 0.0;
    for (int i : samples) loss += sample_loss(labels[i], margin[i] + value);
    return loss;
  }

  double leaf(std::span<const int> samples) const {
    double g = 0.0;
    double h = 0.0;
    for (int i : samples) {
      g += residual[i];
      h += hessian[i];
    }
    if (h < 1e-12) return 0.0;
    double value = learning_rate * g / h;
    const double base = leaf_loss(samples, 0.0);
    for (int halvings = 0; halvings < 60; ++halvings) {
      if (leaf_loss(samples, value) <= base) return value;
      value *= 0.5;
    }
    return 0.0;
  }
};

}  // namespace

void GbdtParams::validate() const {
  if (n_trees < 1) fail(ErrorKind::Usage, "n_trees must be >= 1");
  if (max_depth < 1) fail(ErrorKind::Usage, "max_depth must be >= 1");
  if (min_leaf < 1) fail(ErrorKind::Usage, "min_leaf must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    fail(ErrorKind::Usage, "learning_rate must lie in (0, 1]");
  }
  if (!(subsample > 0.0 && subsample <= 1.0)) {
    fail(ErrorKind::Usage, "subsample must lie in (0, 1]");
  }
}

double GbdtModel::margin(std::span<const double> x) const {
  double m = base_score;
  for (const auto& t : trees) m += t.predict(x);
  return m;
}

std::vector<std::string> region_feature_names() {
  return {FeatureVector::kNames.begin(), FeatureVector::kNames.end()};
}

GbdtModel gbdt_train(const Dataset& data, const GbdtParams& params,
                     std::vector<std::string> feature_names,
                     std::vector<double>* loss_trace) {
  params.validate();
  data.validate();
  const int n = static_cast<int>(data.size());
  const auto nf = data.n_features();
  if (feature_names.empty()) {
    for (std::size_t f = 0; f < nf; ++f) feature_names.push_back("f" + std::to_string(f));
  }
  if (feature_names.size() != nf) {
    fail(ErrorKind::Usage, "feature name count does not match the data");
  }

  GbdtModel model;
  model.feature_names = std::move(feature_names);
  const double positives = std::count(data.labels.begin(), data.labels.end(), 1);
  const double prior = positives / n;
  model.base_score = std::log(prior / (1.0 - prior));

  std::vector<double> margin(n, model.base_score);
  std::vector<double> residual(n);
  std::vector<double> hessian(n);
  auto mean_loss = [&] {
    double loss = 0.0;
    for (int i = 0; i < n; ++i) loss += sample_loss(data.labels[i], margin[i]);
    return loss / n;
  };
  if (loss_trace) {
    loss_trace->clear();
    loss_trace->push_back(mean_loss());
  }

  Rng rng(params.seed);
  const int n_sub = std::max(1, static_cast<int>(std::floor(params.subsample * n)));
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;

  ResidualCriterion criterion{residual, hessian, margin, data.labels, params.learning_rate};
  detail::GrowParams grow{params.max_depth, params.min_leaf, 0, nullptr};
  for (int t = 0; t < params.n_trees; ++t) {
    for (int i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      residual[i] = data.labels[i] - p;
      hessian[i] = p * (1.0 - p);
    }
    std::vector<int> samples = all;
    if (n_sub < n) {
      rng.shuffle(std::span<int>(samples));
      samples.resize(n_sub);
      std::sort(samples.begin(), samples.end());
    }
    detail::TreeGrower<ResidualCriterion> grower(data, criterion, grow);
    auto tree = grower.grow(std::move(samples));
    for (int i = 0; i < n; ++i) margin[i] += tree.predict(data.rows[i]);
    model.trees.push_back(std::move(tree));
    if (loss_trace) loss_trace->push_back(mean_loss());
  }
  return model;
}

double gbdt_predict(const GbdtModel& model, std::span<const double> features) {
  if (features.size() != model.n_features()) {
    fail(ErrorKind::Model, "feature count mismatch: model expects " +
                               std::to_string(model.n_features()) + ", got " +
                               std::to_string(features.size()));
  }
  return sigmoid(model.margin(features));
}

double gbdt_predict(const GbdtModel& model, const FeatureVector& features) {
  const auto v = features.values();
  return gbdt_predict(model, std::span<const double>(v));
}

void gbdt_write(const GbdtModel& model, std::ostream& os) {
  os << "ki67-model gbdt " << GbdtModel::kVersion << '\n';
  os << "n_features " << model.n_features() << '\n';
  os << "feature_names";
  for (const auto& name : model.feature_names) os << ' ' << name;
  os << '\n';
  os << "base_score " << detail::format_double(model.base_score) << '\n';
  detail::write_trees(os, model.trees);
}

GbdtModel gbdt_read(std::istream& is) {
  detail::read_model_header(is, "gbdt", GbdtModel::kVersion);
  GbdtModel model;
  std::string key;
  long long nf = 0;
  if (!(is >> key) || key != "n_features" || !(is >> nf) || nf < 1 || nf > 4096) {
    fail(ErrorKind::Model, "malformed model file: bad n_features");
  }
  if (!(is >> key) || key != "feature_names") {
    fail(ErrorKind::Model, "malformed model file: expected 'feature_names'");
  }
  model.feature_names.resize(static_cast<std::size_t>(nf));
  for (auto& name : model.feature_names) {
    if (!(is >> name)) fail(ErrorKind::Model, "malformed model file: truncated feature names");
  }
  std::string value;
  if (!(is >> key) || key != "base_score" || !(is >> value)) {
    fail(ErrorKind::Model, "malformed model file: expected 'base_score'");
  }
  char* end = nullptr;
  model.base_score = std::strtod(value.c_str(), &end);
  if (*end != '\0' || !std::isfinite(model.base_score)) {
    fail(ErrorKind::Model, "malformed model file: bad base_score");
  }
  model.trees = detail::read_trees(is, static_cast<int>(nf));
  return model;
}

void gbdt_save(const GbdtModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Input, "cannot write model: " + path.string());
  gbdt_write(model, os);
  if (!os) fail(ErrorKind::Input, "write failed: " + path.string());
}

GbdtModel gbdt_load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Input, "cannot open model: " + path.string());
  return gbdt_read(is);
}

}  // namespace ki67
