#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ki67/classify.hpp"
#include "ki67/datasets.hpp"
#include "ki67/synth.hpp"
#include "support.hpp"

using namespace ki67;

namespace {

RasterImage solid_rgb(int w, int h, std::array<std::uint8_t, 3> c) {
  auto img = RasterImage::blank(w, h, 3, 8);
  for (int i = 0; i < w * h; ++i) {
    for (int k = 0; k < 3; ++k) img.data[3 * i + k] = c[k];
  }
  return img;
}

int correct_count(const SynthImage& img, const std::vector<NucleusRecord>& recs) {
  int ok = 0;
  for (const auto& r : recs) ok += r.cls == img.truth.nuclei[r.label - 1].cls;
  return ok;
}

}  // namespace

TEST_CASE("optical density and deconvolution") {
  const auto s = StainVectors::h_dab();
  SUBCASE("white has no absorbance") {
    const auto c = stain_deconvolve(s, 255, 255, 255);
    for (double v : c) CHECK(std::abs(v) < 0.01);
  }
  SUBCASE("black has OD log10(256) per channel") {
    const auto od = optical_density(0, 0, 0);
    for (double v : od) CHECK(v == doctest::Approx(2.408).epsilon(1e-3));
  }
  SUBCASE("pure DAB at OD 1 is recovered") {
    const auto rgb = od_to_rgb(s.mix({0.0, 1.0, 0.0}));
    const auto c = stain_deconvolve(s, rgb[0], rgb[1], rgb[2]);
    CHECK(std::abs(c[1] - 1.0) < 0.05);
    CHECK(std::abs(c[0]) < 0.05);
  }
  SUBCASE("pure hematoxylin at OD 0.7 is recovered") {
    const auto rgb = od_to_rgb(s.mix({0.7, 0.0, 0.0}));
    const auto c = stain_deconvolve(s, rgb[0], rgb[1], rgb[2]);
    CHECK(std::abs(c[0] - 0.7) < 0.05);
    CHECK(std::abs(c[1]) < 0.05);
  }
  SUBCASE("basis is unit norm and mix inverts unmix") {
    for (const auto* v : {&s.hematoxylin(), &s.dab(), &s.residual()}) {
      CHECK(std::hypot((*v)[0], (*v)[1], (*v)[2]) == doctest::Approx(1.0));
    }
    const Vec3 c{0.3, 0.8, 0.1};
    const auto back = s.unmix(s.mix(c));
    for (int k = 0; k < 3; ++k) CHECK(back[k] == doctest::Approx(c[k]).epsilon(1e-12));
  }
  SUBCASE("custom vectors are normalised") {
    const auto t = StainVectors::from({2, 0, 0}, {0, 3, 0});
    CHECK(t.hematoxylin()[0] == doctest::Approx(1.0));
    CHECK(std::abs(t.residual()[2]) == doctest::Approx(1.0));
  }
}

TEST_CASE("patch features") {
  const auto s = StainVectors::h_dab();
  auto make_patch = [&](const Vec3& conc) {
    const auto rgb = od_to_rgb(s.mix(conc));
    auto img = solid_rgb(40, 40, {255, 255, 255});
    const auto disc = test::disc_mask(40, 40, 20, 20, 7);
    for (std::size_t i = 0; i < disc.size(); ++i) {
      if (!disc[i]) continue;
      for (int k = 0; k < 3; ++k) img.data[3 * i + k] = rgb[k];
    }
    return extract_patch(img, extract_region(connected_components(disc), 1));
  };
  SUBCASE("DAB nucleus") {
    const auto f = patch_features(make_patch({0.0, 0.9, 0.0}));
    REQUIRE(f.size() == 12);
    CHECK(f[2] > f[0]);
  }
  SUBCASE("hematoxylin nucleus") {
    const auto f = patch_features(make_patch({0.7, 0.0, 0.0}));
    CHECK(f[0] > f[2]);
  }
  SUBCASE("white patch has near-zero OD") {
    const auto f = patch_features(make_patch({0.0, 0.0, 0.0}));
    CHECK(std::abs(f[0]) < 0.01);
    CHECK(std::abs(f[2]) < 0.01);
  }
  SUBCASE("patch geometry") {
    const auto p = make_patch({0.0, 0.9, 0.0});
    CHECK(p.rgb.width == 32);
    CHECK(p.rgb.height == 32);
    CHECK(test::count(p.mask) == test::count(test::disc_mask(40, 40, 20, 20, 7)));
    CHECK(HandcraftedFeatures()(p) == patch_features(p));
  }
  SUBCASE("empty mask is rejected") {
    NucleusPatch p{solid_rgb(32, 32, {255, 255, 255}), BinaryMask(32, 32)};
    CHECK_THROWS_AS(patch_features(p), Error);
  }
}

TEST_CASE("baseline classifies a noise-free synthetic image exactly") {
  SynthConfig cfg;
  cfg.stain_noise_sd = 0.0;
  const auto img = generate(cfg);
  const auto recs = classify_nuclei(img.truth.labels, img.rgb, StainBaselineClassifier());
  REQUIRE(recs.size() == 40);
  CHECK(correct_count(img, recs) == 40);
}

TEST_CASE("forest classifier on a held-out synthetic image") {
  SynthConfig train;
  train.seed = 900;
  auto features = std::make_shared<HandcraftedFeatures>();
  RfParams p;
  p.n_trees = 100;
  const auto model = rf_train(nucleus_dataset(train, 600, *features), p);
  const ForestClassifier clf(model, features);
  SynthConfig cfg;
  const auto img = generate(cfg);
  const auto recs = classify_nuclei(img.truth.labels, img.rgb, clf);
  REQUIRE(recs.size() == 40);
  CHECK(correct_count(img, recs) >= 38);
  for (const auto& r : recs) {
    REQUIRE(r.confidence >= 0.0);
    REQUIRE(r.confidence <= 1.0);
  }
}

TEST_CASE("empty label map gives no records") {
  CHECK(classify_nuclei(LabelMap(16, 16), solid_rgb(16, 16, {200, 200, 200}),
                        StainBaselineClassifier())
            .empty());
}

TEST_CASE("classification is invariant to relabeling") {
  SynthConfig cfg;
  cfg.seed = 31;
  const auto img = generate(cfg);
  const auto base = classify_nuclei(img.truth.labels, img.rgb, StainBaselineClassifier());
  const int k = max_label(img.truth.labels);
  std::vector<int> perm(k + 1);
  for (int i = 0; i <= k; ++i) perm[i] = i;
  Rng rng(5);
  rng.shuffle(std::span<int>(perm.data() + 1, k));
  LabelMap relabeled = img.truth.labels;
  for (std::size_t i = 0; i < relabeled.size(); ++i) relabeled[i] = perm[relabeled[i]];
  const auto moved = classify_nuclei(relabeled, img.rgb, StainBaselineClassifier());
  REQUIRE(moved.size() == base.size());
  for (const auto& r : base) {
    const auto& m = moved[perm[r.label] - 1];
    CHECK(m.cls == r.cls);
    CHECK(m.confidence == r.confidence);
    CHECK(m.area == r.area);
  }
}

TEST_CASE("baseline is monotone in DAB") {
  for (double h : {0.2, 0.6, 1.0}) {
    NucleusClass prev = NucleusClass::Negative;
    double prev_conf = 0;
    for (double dab = 0.0; dab <= 1.5; dab += 0.01) {
      const auto p = StainBaselineClassifier::decide(h, dab);
      if (prev == NucleusClass::Positive) REQUIRE(p.cls == NucleusClass::Positive);
      REQUIRE(p.confidence >= prev_conf);
      prev = p.cls;
      prev_conf = p.confidence;
    }
  }
  SynthConfig cfg;
  cfg.seed = 44;
  const auto img = generate(cfg);
  const auto stains = StainVectors::h_dab();
  auto boosted = img.rgb;
  for (int i = 0; i < boosted.width * boosted.height; ++i) {
    if (img.truth.labels[i] == 0) continue;
    auto c = stain_deconvolve(stains, boosted.data[3 * i], boosted.data[3 * i + 1],
                              boosted.data[3 * i + 2]);
    c[1] += 0.2;
    const auto rgb = od_to_rgb(stains.mix(c));
    for (int k = 0; k < 3; ++k) boosted.data[3 * i + k] = rgb[k];
  }
  const auto before = classify_nuclei(img.truth.labels, img.rgb, StainBaselineClassifier());
  const auto after = classify_nuclei(img.truth.labels, boosted, StainBaselineClassifier());
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].cls == NucleusClass::Positive) CHECK(after[i].cls == NucleusClass::Positive);
  }
}
