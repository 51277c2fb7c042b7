#include "ki67/forest.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "ki67/error.hpp"
#include "ki67/rng.hpp"
#include "tree_builder.hpp"

namespace ki67 {

namespace {

// Weighted Gini: score(S) = n - sum_c n_c^2 / n is an impurity, so the
// grower's "gain" is its negation summed over children.
struct GiniCriterion {
  struct Stats {
    double count[2] = {0.0, 0.0};
  };
  const std::vector<int>& labels;

  Stats empty() const { return {}; }
  void add(Stats& s, int i) const { s.count[labels[i]] += 1.0; }
  void subtract(Stats& from, const Stats& part) const {
    from.count[0] -= part.count[0];
    from.count[1] -= part.count[1];
  }
  double score(const Stats& s) const {
    const double n = s.count[0] + s.count[1];
    if (n <= 0) return 0.0;
    return (s.count[0] * s.count[0] + s.count[1] * s.count[1]) / n;
  }
  double leaf(std::span<const int> samples) const {
    std::size_t pos = 0;
    for (int i : samples) pos += labels[i] == 1;
    return 2 * pos > samples.size() ? 1.0 : 0.0;
  }
};

}  // namespace

void RfParams::validate() const {
  if (n_trees < 1) fail(ErrorKind::Usage, "n_trees must be >= 1");
  if (max_depth < 1) fail(ErrorKind::Usage, "max_depth must be >= 1");
  if (min_leaf < 1) fail(ErrorKind::Usage, "min_leaf must be >= 1");
  if (mtry < 0) fail(ErrorKind::Usage, "mtry must be >= 0");
}

double RfModel::positive_fraction(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != n_features) {
    fail(ErrorKind::Model, "feature count mismatch: model expects " +
                               std::to_string(n_features) + ", got " +
                               std::to_string(x.size()));
  }
  if (trees.empty()) return 0.0;
  double votes = 0.0;
  for (const auto& t : trees) votes += t.predict(x);
  return votes / static_cast<double>(trees.size());
}

RfModel rf_train(const Dataset& data, const RfParams& params) {
  params.validate();
  data.validate();
  const int n = static_cast<int>(data.size());
  const int nf = static_cast<int>(data.n_features());
  const int mtry = params.mtry > 0 ? std::min(params.mtry, nf)
                                   : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(nf))));

  RfModel model;
  model.n_features = nf;
  model.trees.resize(params.n_trees);
  // in_bag[t][i] = times sample i was drawn for tree t.
  std::vector<std::vector<int>> in_bag(params.n_trees, std::vector<int>(n, 0));
  GiniCriterion criterion{data.labels};

#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng = Rng::stream(params.seed, static_cast<std::uint64_t>(t));
    std::vector<int> samples(n);
    if (params.bootstrap) {
      for (int i = 0; i < n; ++i) samples[i] = static_cast<int>(rng.below(n));
      std::sort(samples.begin(), samples.end());
    } else {
      for (int i = 0; i < n; ++i) samples[i] = i;
    }
    for (int s : samples) ++in_bag[t][s];
    detail::GrowParams grow{params.max_depth, params.min_leaf, mtry, &rng};
    detail::TreeGrower<GiniCriterion> grower(data, criterion, grow);
    model.trees[t] = grower.grow(std::move(samples));
  }

  int evaluated = 0;
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    int votes = 0;
    int positive = 0;
    for (int t = 0; t < params.n_trees; ++t) {
      if (in_bag[t][i] != 0) continue;
      ++votes;
      positive += model.trees[t].predict(data.rows[i]) > 0.5;
    }
    if (votes == 0) continue;
    ++evaluated;
    const int predicted = 2 * positive > votes ? 1 : 0;
    correct += predicted == data.labels[i];
  }
  model.oob_accuracy = evaluated > 0 ? static_cast<double>(correct) / evaluated : -1.0;
  return model;
}

void rf_write(const RfModel& model, std::ostream& os) {
  os << "ki67-model rf " << RfModel::kVersion << '\n';
  os << "n_features " << model.n_features << '\n';
  os << "class_names " << model.class_names[0] << ' ' << model.class_names[1] << '\n';
  os << "oob_accuracy " << detail::format_double(model.oob_accuracy) << '\n';
  detail::write_trees(os, model.trees);
}

RfModel rf_read(std::istream& is) {
  detail::read_model_header(is, "rf", RfModel::kVersion);
  RfModel model;
  std::string key;
  if (!(is >> key) || key != "n_features" || !(is >> model.n_features) ||
      model.n_features < 1 || model.n_features > 4096) {
    fail(ErrorKind::Model, "malformed model file: bad n_features");
  }
  if (!(is >> key) || key != "class_names" || !(is >> model.class_names[0] >> model.class_names[1])) {
    fail(ErrorKind::Model, "malformed model file: expected 'class_names'");
  }
  std::string value;
  if (!(is >> key) || key != "oob_accuracy" || !(is >> value)) {
    fail(ErrorKind::Model, "malformed model file: expected 'oob_accuracy'");
  }
  char* end = nullptr;
  model.oob_accuracy = std::strtod(value.c_str(), &end);
  if (*end != '\0') fail(ErrorKind::Model, "malformed model file: bad oob_accuracy");
  model.trees = detail::read_trees(is, model.n_features);
  return model;
}

void rf_save(const RfModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Input, "cannot write model: " + path.string());
  rf_write(model, os);
  if (!os) fail(ErrorKind::Input, "write failed: " + path.string());
}

RfModel rf_load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Input, "cannot open model: " + path.string());
  return rf_read(is);
}

}  // namespace ki67
