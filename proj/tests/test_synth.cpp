#include <doctest.h>

#include <omp.h>

#include <fstream>
#include <map>
#include <sstream>

#include "ki67/classify.hpp"
#include "ki67/regions.hpp"
#include "ki67/synth.hpp"
#include "support.hpp"

using namespace ki67;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("no nuclei gives a blank white image") {
  SynthConfig cfg;
  cfg.n_nuclei = 0;
  const auto img = generate(cfg);
  for (auto v : img.rgb.data) REQUIRE(v == 255);
  for (std::size_t i = 0; i < img.prob.size(); ++i) REQUIRE(img.prob[i] == 0.0);
  CHECK(img.truth.nuclei.empty());
  CHECK(max_label(img.truth.labels) == 0);
  CHECK(img.truth.counts.n_total == 0);
}

TEST_CASE("generation is deterministic") {
  SynthConfig cfg;
  cfg.seed = 123;
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  CHECK(a.rgb.data == b.rgb.data);
  CHECK(a.prob == b.prob);
  CHECK(a.truth.labels == b.truth.labels);
  cfg.seed = 124;
  CHECK(generate(cfg).rgb.data != a.rgb.data);
}

TEST_CASE("default image has the expected counts") {
  SynthConfig cfg;
  const auto img = generate(cfg);
  CHECK(img.truth.counts.n_positive == 10);
  CHECK(img.truth.counts.n_total == 40);
  CHECK(pi_score({img.truth.counts}).pi == 25.0);
}

TEST_CASE("truth is consistent") {
  for (std::uint64_t i = 0; i < 10; ++i) {
    SynthConfig cfg;
    cfg.seed = image_seed(3, i);
    const auto img = generate(cfg);
    const auto& t = img.truth;
    long long pos = 0;
    for (const auto& n : t.nuclei) pos += n.cls == NucleusClass::Positive;
    REQUIRE(t.counts.n_positive == pos);
    REQUIRE(t.counts.n_total == static_cast<long long>(t.nuclei.size()));
    std::vector<long long> area(t.nuclei.size() + 1, 0);
    for (auto v : t.labels.data()) ++area[v];
    for (std::size_t k = 1; k < area.size(); ++k) REQUIRE(area[k] > 0);
    REQUIRE(t.components == connected_components(foreground(t.labels)));
    std::map<int, int> per_component;
    for (const auto& n : t.nuclei) ++per_component[n.component];
    for (int id : t.overlap_region_ids) REQUIRE(per_component[id] >= 2);
    int multi = 0;
    for (const auto& [id, c] : per_component) multi += c >= 2;
    REQUIRE(multi == static_cast<int>(t.overlap_region_ids.size()));
  }
}

TEST_CASE("pairs respect the IoU cap") {
  for (double cap : {0.1, 0.3, 0.5}) {
    SynthConfig cfg;
    cfg.max_pair_overlap = cap;
    cfg.overlap_fraction = 0.5;
    for (std::uint64_t i = 0; i < 5; ++i) {
      cfg.seed = image_seed(11, i);
      const auto img = generate(cfg);
      for (const auto& n : img.truth.nuclei) {
        if (n.partner == 0 || n.partner < n.id) continue;
        const auto& other = img.truth.nuclei[n.partner - 1];
        REQUIRE(ellipse_iou(n.shape, other.shape) <= cap + 1e-12);
        REQUIRE(n.component == other.component);
      }
    }
  }
  Rng rng(5);
  SynthConfig cfg;
  for (int t = 0; t < 200; ++t) {
    const auto [a, b] = sample_pair(rng, cfg);
    REQUIRE(ellipse_iou(a, b) <= cfg.max_pair_overlap + 1e-12);
    BinaryMask m(64, 64);
    Ellipse sa = a;
    Ellipse sb = b;
    sb.cx += 32 - sa.cx;
    sb.cy += 32 - sa.cy;
    sa.cx = 32;
    sa.cy = 32;
    for (const auto& p : rasterize(sa)) m(p.x, p.y) = 1;
    for (const auto& p : rasterize(sb)) m(p.x, p.y) = 1;
    REQUIRE(max_label(connected_components(m)) == 1);
  }
}

TEST_CASE("overlap fraction converges over 50 images") {
  SynthConfig cfg;
  long long multi = 0;
  long long components = 0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    cfg.seed = image_seed(7, i);
    const auto img = generate(cfg);
    multi += static_cast<long long>(img.truth.overlap_region_ids.size());
    components += max_label(img.truth.components);
  }
  const double fraction = static_cast<double>(multi) / static_cast<double>(components);
  CHECK(fraction >= 0.9 * cfg.overlap_fraction);
  CHECK(fraction <= 1.1 * cfg.overlap_fraction);
}

TEST_CASE("rendered stains match the classes") {
  const auto stains = StainVectors::h_dab();
  for (std::uint64_t i = 0; i < 5; ++i) {
    SynthConfig cfg;
    cfg.seed = image_seed(9, i);
    const auto img = generate(cfg);
    const auto planes = stain_deconvolve(stains, img.rgb);
    const int k = static_cast<int>(img.truth.nuclei.size());
    std::vector<double> h(k + 1, 0), d(k + 1, 0);
    std::vector<long long> n(k + 1, 0);
    for (std::size_t p = 0; p < img.truth.labels.size(); ++p) {
      const int l = img.truth.labels[p];
      h[l] += planes.h[p];
      d[l] += planes.dab[p];
      ++n[l];
    }
    for (const auto& nuc : img.truth.nuclei) {
      if (nuc.cls == NucleusClass::Positive) REQUIRE(d[nuc.id] > h[nuc.id]);
      else REQUIRE(h[nuc.id] > d[nuc.id]);
    }
  }
}

TEST_CASE("probability map is near binary with soft edges") {
  const auto img = generate(SynthConfig{});
  for (std::size_t i = 0; i < img.prob.size(); ++i) {
    REQUIRE(img.prob[i] >= 0.0);
    REQUIRE(img.prob[i] <= 1.0);
  }
  const auto fg = foreground(img.truth.labels);
  long long agree = 0;
  for (std::size_t i = 0; i < fg.size(); ++i) agree += (img.prob[i] >= 0.5) == (fg[i] != 0);
  CHECK(static_cast<double>(agree) / static_cast<double>(fg.size()) >= 0.99);
}

TEST_CASE("invalid configs and crowding") {
  SynthConfig c;
  c.radius_min = 2;
  CHECK_THROWS_AS(generate(c), Error);
  SynthConfig d;
  d.positive_fraction = 1.5;
  CHECK_THROWS_AS(generate(d), Error);
  SynthConfig crowded;
  crowded.width = 64;
  crowded.height = 64;
  crowded.n_nuclei = 200;
  try {
    generate(crowded);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Processing);
    CHECK(std::string(e.what()).find("lower") != std::string::npos);
  }
}

TEST_CASE("dataset export") {
  const auto dir = test::scratch_dir("synth_export");
  SynthConfig cfg;
  cfg.seed = 21;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto rows = export_dataset(cfg, 3, dir / "a");
  omp_set_num_threads(3);
  const auto again = export_dataset(cfg, 3, dir / "b");
  omp_set_num_threads(saved);
  REQUIRE(rows.size() == 3);
  for (const char* suffix : {".png", "_prob.png", "_labels.png", "_truth.csv"}) {
    for (const auto& r : rows) REQUIRE(std::filesystem::exists(dir / "a" / (r.image + suffix)));
  }
  CHECK(slurp(dir / "a" / "manifest.csv") == slurp(dir / "b" / "manifest.csv"));
  CHECK(slurp(dir / "a" / "img_0002.png") == slurp(dir / "b" / "img_0002.png"));
  std::ifstream is(dir / "a" / "manifest.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "image,seed,n_positive,n_total,pi,n_overlap_regions");
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    SynthConfig one = cfg;
    one.seed = image_seed(cfg.seed, i);
    REQUIRE(rows[i].seed == one.seed);
    const auto img = generate(one);
    CHECK(rows[i].pi == pi_score({img.truth.counts}).pi);
    CHECK(to_label_map(load_image(dir / "a" / (rows[i].image + "_labels.png"))) ==
          img.truth.labels);
  }
}
