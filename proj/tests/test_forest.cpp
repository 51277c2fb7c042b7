#include <doctest.h>

#include <omp.h>

#include <sstream>

#include "ki67/classify.hpp"
#include "ki67/datasets.hpp"
#include "ki67/forest.hpp"
#include "support.hpp"

using namespace ki67;

namespace {

std::string serialize(const RfModel& m) {
  std::ostringstream os;
  rf_write(m, os);
  return os.str();
}

Dataset stain_set(int n) {
  SynthConfig cfg;
  cfg.seed = 500;
  return nucleus_dataset(cfg, n, HandcraftedFeatures());
}

RfParams small(int n_trees) {
  RfParams p;
  p.n_trees = n_trees;
  return p;
}

}  // namespace

TEST_CASE("separable stain dataset has high out-of-bag accuracy") {
  const auto d = stain_set(500);
  REQUIRE(d.size() == 500);
  const auto m = rf_train(d, small(100));
  CHECK(m.oob_accuracy >= 0.95);
  CHECK(m.n_features == 12);
}

TEST_CASE("forest training is deterministic and independent of thread count") {
  const auto d = stain_set(200);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = serialize(rf_train(d, small(40)));
  omp_set_num_threads(3);
  const auto b = serialize(rf_train(d, small(40)));
  omp_set_num_threads(saved);
  CHECK(a == b);
  auto other = small(40);
  other.seed = 1;
  CHECK(serialize(rf_train(d, other)) != a);
}

TEST_CASE("one tree without bootstrap is a plain decision tree") {
  Dataset d;
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform();
    const double y = rng.uniform();
    d.add({x, y}, x + 2 * y > 1.4 ? 1 : 0);
  }
  auto p = small(1);
  p.bootstrap = false;
  p.mtry = 2;
  p.min_leaf = 1;
  const auto m = rf_train(d, p);
  REQUIRE(m.trees.size() == 1);
  CHECK(m.oob_accuracy == -1.0);
  for (std::size_t i = 0; i < d.size(); ++i) REQUIRE(m.predict(d.rows[i]) == d.labels[i]);
  for (const auto& n : m.trees[0].nodes) {
    if (n.is_leaf()) REQUIRE((n.value == 0.0 || n.value == 1.0));
    else REQUIRE(n.feature < 2);
  }
  CHECK(serialize(rf_train(d, p)) == serialize(m));
}

TEST_CASE("votes are fractions that sum to one") {
  const auto d = stain_set(120);
  const auto m = rf_train(d, small(25));
  for (const auto& row : d.rows) {
    const double pos = m.positive_fraction(row);
    REQUIRE(pos >= 0.0);
    REQUIRE(pos <= 1.0);
    REQUIRE(pos * 25 == doctest::Approx(std::round(pos * 25)));
    REQUIRE(m.predict(row) == (pos > 0.5 ? 1 : 0));
  }
  CHECK_THROWS_AS(m.positive_fraction(std::vector<double>{1.0}), Error);
}

TEST_CASE("forest validation") {
  Dataset one;
  one.add({1.0}, 1);
  one.add({2.0}, 1);
  CHECK_THROWS_AS(rf_train(one, small(3)), Error);
  CHECK_THROWS_AS(rf_train(stain_set(20), small(0)), Error);
  auto bad = small(3);
  bad.mtry = -1;
  CHECK_THROWS_AS(rf_train(stain_set(20), bad), Error);
}

TEST_CASE("forest file round trip and errors") {
  const auto dir = test::scratch_dir("rf_io");
  const auto d = stain_set(150);
  const auto m = rf_train(d, small(30));
  rf_save(m, dir / "c.model");
  const auto back = rf_load(dir / "c.model");
  CHECK(back == m);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(12);
    for (auto& v : x) v = rng.uniform(-1, 3);
    REQUIRE(back.positive_fraction(x) == m.positive_fraction(x));
  }
  const auto text = serialize(m);
  auto expect_model_error = [](const std::string& s) {
    std::istringstream is(s);
    try {
      rf_read(is);
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Model);
    }
  };
  expect_model_error(text.substr(0, text.size() / 3));
  expect_model_error("ki67-model gbdt 1\n");
  expect_model_error("ki67-model rf 2\n");
  expect_model_error("");
}
