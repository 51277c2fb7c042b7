#include "ki67/trees.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "ki67/error.hpp"

namespace ki67 {

double DecisionTree::predict(std::span<const double> x) const {
  int i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[i].value;
}

int DecisionTree::depth() const {
  // Children always follow their parent in the node array.
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[nodes[i].left] = level[i] + 1;
      level[nodes[i].right] = level[i] + 1;
    }
  }
  return deepest;
}

void Dataset::validate() const {
  if (rows.size() != labels.size()) {
    fail(ErrorKind::Processing, "dataset rows and labels differ in length");
  }
  if (rows.size() < 2) fail(ErrorKind::Processing, "need at least 2 training samples");
  const auto nf = n_features();
  if (nf == 0) fail(ErrorKind::Processing, "training rows have no features");
  bool seen[2] = {false, false};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != nf) fail(ErrorKind::Processing, "ragged training rows");
    for (double v : rows[i]) {
      if (!std::isfinite(v)) {
        fail(ErrorKind::Processing, "non-finite feature in row " + std::to_string(i));
      }
    }
    if (labels[i] != 0 && labels[i] != 1) {
      fail(ErrorKind::Processing, "labels must be 0 or 1");
    }
    seen[labels[i]] = true;
  }
  if (!seen[0] || !seen[1]) {
    fail(ErrorKind::Processing, "training data contains a single class");
  }
}

namespace detail {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trees(std::ostream& os, const std::vector<DecisionTree>& trees) {
  os << "n_trees " << trees.size() << '\n';
  for (std::size_t t = 0; t < trees.size(); ++t) {
    os << "tree " << t << ' ' << trees[t].nodes.size() << '\n';
    for (const auto& n : trees[t].nodes) {
      os << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' '
         << n.right << ' ' << format_double(n.value) << '\n';
    }
  }
  os << "end\n";
}

namespace {

[[noreturn]] void malformed(const std::string& what) {
  fail(ErrorKind::Model, "malformed model file: " + what);
}

std::string expect_key(std::istream& is, const std::string& key) {
  std::string got;
  if (!(is >> got) || got != key) malformed("expected '" + key + "'");
  return got;
}

double read_double(std::istream& is) {
  std::string token;
  if (!(is >> token)) malformed("truncated number");
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') malformed("bad number '" + token + "'");
  return v;
}

long long read_int(std::istream& is) {
  long long v = 0;
  if (!(is >> v)) malformed("expected integer");
  return v;
}

}  // namespace

std::vector<DecisionTree> read_trees(std::istream& is, int n_features) {
  expect_key(is, "n_trees");
  const long long n_trees = read_int(is);
  if (n_trees < 0 || n_trees > 1'000'000) malformed("tree count out of range");
  std::vector<DecisionTree> trees(static_cast<std::size_t>(n_trees));
  for (long long t = 0; t < n_trees; ++t) {
    expect_key(is, "tree");
    if (read_int(is) != t) malformed("tree index out of order");
    const long long n_nodes = read_int(is);
    if (n_nodes < 1 || n_nodes > 10'000'000) malformed("node count out of range");
    auto& nodes = trees[t].nodes;
    nodes.resize(static_cast<std::size_t>(n_nodes));
    for (auto& n : nodes) {
      n.feature = static_cast<int>(read_int(is));
      n.threshold = read_double(is);
      n.left = static_cast<int>(read_int(is));
      n.right = static_cast<int>(read_int(is));
      n.value = read_double(is);
    }
    // Structural checks: children point forward, features in range.
    for (long long i = 0; i < n_nodes; ++i) {
      const auto& n = nodes[i];
      if (n.is_leaf()) {
        if (n.feature != -1 || !std::isfinite(n.value)) malformed("bad leaf");
        continue;
      }
      if (n.feature >= n_features) malformed("split feature out of range");
      if (n.left <= i || n.right <= i || n.left >= n_nodes || n.right >= n_nodes) {
        malformed("bad child index");
      }
      if (!std::isfinite(n.threshold)) malformed("non-finite threshold");
    }
  }
  expect_key(is, "end");
  return trees;
}

void read_model_header(std::istream& is, const std::string& kind, int version) {
  std::string magic;
  std::string got_kind;
  if (!(is >> magic) || magic != "ki67-model") malformed("missing ki67-model header");
  if (!(is >> got_kind)) malformed("missing model kind");
  const long long got_version = read_int(is);
  if (got_kind != kind) {
    fail(ErrorKind::Model, "model kind mismatch: expected " + kind + ", found " + got_kind);
  }
  if (got_version != version) {
    fail(ErrorKind::Model, "unsupported " + kind + " model version " +
                               std::to_string(got_version) + " (expected " +
                               std::to_string(version) + ")");
  }
}

}  // namespace detail
}  // namespace ki67
