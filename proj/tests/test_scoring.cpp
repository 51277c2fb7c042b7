#include <doctest.h>

#include <algorithm>

#include "ki67/classify.hpp"
#include "ki67/scoring.hpp"
#include "ki67/synth.hpp"
#include "support.hpp"

using namespace ki67;

namespace {

RegionCount rc(long long n, long long t) {
  RegionCount r;
  r.n_positive = n;
  r.n_total = t;
  return r;
}

RoiClassification roi(int positive, int total) {
  RoiClassification r;
  for (int i = 0; i < total; ++i) {
    NucleusRecord n;
    n.label = i + 1;
    n.cls = i < positive ? NucleusClass::Positive : NucleusClass::Negative;
    r.nuclei.push_back(n);
  }
  return r;
}

}  // namespace

TEST_CASE("pi_score worked examples") {
  CHECK(pi_score({rc(20, 100)}).pi == doctest::Approx(20.0));
  CHECK(pi_score({rc(10, 100), rc(30, 100)}).pi == doctest::Approx(20.0));
  const auto r = pi_score({rc(15, 50), rc(30, 100), rc(5, 25)});
  CHECK(r.pi == doctest::Approx(26.6667).epsilon(1e-5));
  CHECK(r.r == 3);
  CHECK(r.per_region == std::vector<double>{30.0, 30.0, 20.0});
}

TEST_CASE("pi_score errors") {
  CHECK_THROWS_AS(pi_score({}), Error);
  CHECK_THROWS_AS(pi_score({rc(0, 0)}), Error);
  CHECK_THROWS_AS(pi_score({rc(5, 4)}), Error);
  CHECK_THROWS_AS(pi_score({rc(-1, 4)}), Error);
}

TEST_CASE("pi_score is permutation and scale invariant") {
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    std::vector<RegionCount> v;
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n; ++i) {
      const long long total = 1 + static_cast<long long>(rng.below(200));
      v.push_back(rc(static_cast<long long>(rng.below(total + 1)), total));
    }
    const double pi = pi_score(v).pi;
    REQUIRE(pi >= 0.0);
    REQUIRE(pi <= 100.0);
    auto shuffled = v;
    rng.shuffle(std::span<RegionCount>(shuffled));
    REQUIRE(pi_score(shuffled).pi == doctest::Approx(pi).epsilon(1e-12));
    const long long k = 1 + static_cast<long long>(rng.below(9));
    auto scaled = v;
    for (auto& r : scaled) {
      r.n_positive *= k;
      r.n_total *= k;
    }
    REQUIRE(pi_score(scaled).pi == doctest::Approx(pi).epsilon(1e-12));
  }
}

TEST_CASE("agreement worked examples") {
  SUBCASE("exact line") {
    std::vector<std::pair<double, double>> p;
    for (double m : {5.0, 12.0, 20.0, 33.0, 41.0}) p.push_back({m, 0.5 * m + 3});
    const auto a = agreement(p);
    CHECK(*a.pearson == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*a.spearman == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*a.r2 == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("Bland-Altman arithmetic") {
    const auto a = agreement({{10, 12}, {20, 18}, {30, 30}});
    CHECK(a.bland_mean_diff == doctest::Approx(0.0));
    CHECK(a.bland_sd == doctest::Approx(2.0));
    CHECK(a.loa_lower == doctest::Approx(-3.92));
    CHECK(a.loa_upper == doctest::Approx(3.92));
  }
  SUBCASE("reversed order") {
    const auto a = agreement({{1, 9}, {2, 7}, {3, 4}, {4, 1}});
    CHECK(*a.spearman == doctest::Approx(-1.0));
  }
  SUBCASE("identical series") {
    const auto a = agreement({{1, 1}, {5, 5}, {7, 7}, {7, 7}});
    CHECK(*a.pearson == doctest::Approx(1.0));
    CHECK(*a.spearman == doctest::Approx(1.0));
    CHECK(*a.r2 == doctest::Approx(1.0));
    CHECK(a.bland_mean_diff == 0.0);
    CHECK(a.loa_lower == 0.0);
    CHECK(a.loa_upper == 0.0);
  }
  SUBCASE("constant series leave correlations undefined") {
    const auto a = agreement({{3, 1}, {3, 2}, {3, 4}});
    CHECK_FALSE(a.pearson.has_value());
    CHECK_FALSE(a.spearman.has_value());
    CHECK_FALSE(a.r2.has_value());
  }
  SUBCASE("too few pairs") { CHECK_THROWS_AS(agreement({{1, 1}, {2, 2}}), Error); }
}

TEST_CASE("agreement invariants on random data") {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::pair<double, double>> p;
    const int n = 3 + static_cast<int>(rng.below(20));
    for (int i = 0; i < n; ++i) {
      const double m = rng.uniform(0, 100);
      p.push_back({m, m + rng.normal(0, 10)});
    }
    const auto a = agreement(p);
    REQUIRE(a.loa_lower <= a.loa_upper);
    REQUIRE(*a.pearson >= -1.0 - 1e-12);
    REQUIRE(*a.pearson <= 1.0 + 1e-12);
    REQUIRE(*a.spearman >= -1.0 - 1e-12);
    REQUIRE(*a.spearman <= 1.0 + 1e-12);
    REQUIRE(*a.r2 <= 1.0 + 1e-12);
  }
}

TEST_CASE("average ranks share ties") {
  CHECK(average_ranks({10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
}

TEST_CASE("score_case") {
  SUBCASE("three ROIs") {
    const auto r = score_case({roi(10, 100), roi(20, 100), roi(30, 100)});
    CHECK(r.pi == doctest::Approx(20.0));
  }
  SUBCASE("all negative") { CHECK(score_case({roi(0, 12)}).pi == 0.0); }
  SUBCASE("empty ROI is excluded with a warning") {
    const auto r = score_case({roi(10, 100), roi(0, 0), roi(30, 100)});
    CHECK(r.r == 2);
    CHECK(r.pi == doctest::Approx(20.0));
    CHECK(r.warnings.size() == 1);
  }
  SUBCASE("no nuclei anywhere") { CHECK_THROWS_AS(score_case({roi(0, 0)}), Error); }
  SUBCASE("perfect classification reproduces the generator PI") {
    std::vector<RoiClassification> rois;
    std::vector<RegionCount> truth;
    for (std::uint64_t i = 0; i < 3; ++i) {
      SynthConfig cfg;
      cfg.seed = image_seed(77, i);
      cfg.positive_fraction = 0.1 + 0.2 * static_cast<double>(i);
      const auto img = generate(cfg);
      RoiClassification r;
      for (const auto& n : img.truth.nuclei) {
        NucleusRecord rec;
        rec.label = n.id;
        rec.cls = n.cls;
        r.nuclei.push_back(rec);
      }
      rois.push_back(r);
      truth.push_back(img.truth.counts);
      const auto counted = count_roi(img.truth.labels, r.nuclei);
      CHECK(counted.n_positive == img.truth.counts.n_positive);
      CHECK(counted.n_total == img.truth.counts.n_total);
    }
    CHECK(score_case(rois).pi == pi_score(truth).pi);
  }
}
